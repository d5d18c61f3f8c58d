"""Sharp-turn detection and edge-extension decomposition into basic elements.

A boundary vertex whose turning magnitude exceeds alpha_max is a sharp
turn. Both edges incident to a sharp turn are extended as rays through
the vertex; a ray that travels through the region interior contributes a
cut from the vertex to its first boundary hit. The cuts partition the
deposition region into the basic elements the GA merges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.ops import unary_union

from .geometry import (
    CONVEX,
    EPS_GEOM,
    REFLEX,
    Point2,
    Region,
    Ring,
    Segment2,
    partition_by_cuts,
    ray_first_hit,
    region_from_polygon,
    turning_magnitudes,
)
from .layer_model import DepositionRegion

SLIVER_AREA = 1e-3  # mm^2: faces below this are merged into a neighbor


@dataclass(frozen=True)
class PreprocessConfig:
    alpha_max: float = 30.0  # degrees; decent results reported for 20..30

    def __post_init__(self):
        if not 0.0 < self.alpha_max < 180.0:
            raise ValueError(f"alpha_max must be in (0, 180), got {self.alpha_max}")


@dataclass(frozen=True)
class SharpTurn:
    vertex: Point2
    ring_id: tuple[int, int]  # (component index, ring index; 0 = outer)
    magnitude: float
    side: str
    edge_in: Segment2
    edge_out: Segment2


@dataclass(frozen=True)
class BasicElement:
    id: int
    region: Region

    def area(self) -> float:
        return self.region.area()


def _rings(component: Region) -> list[Ring]:
    return [component.outer, *component.holes]


def find_sharp_turns(region: DepositionRegion, cfg: PreprocessConfig) -> list[SharpTurn]:
    """All boundary vertices (outer and hole rings) turning more than alpha_max."""
    turns = []
    for ci, component in enumerate(region.components):
        for ri, ring in enumerate(_rings(component)):
            coords = ring.coords
            mags, cross = turning_magnitudes(coords)
            prev = np.roll(coords, 1, axis=0)
            nxt = np.roll(coords, -1, axis=0)
            for vi in np.nonzero(mags > cfg.alpha_max)[0]:
                p = Point2(float(coords[vi, 0]), float(coords[vi, 1]))
                turns.append(SharpTurn(
                    vertex=p,
                    ring_id=(ci, ri),
                    magnitude=float(mags[vi]),
                    side=CONVEX if cross[vi] > 0.0 else REFLEX,
                    edge_in=Segment2(Point2(float(prev[vi, 0]), float(prev[vi, 1])), p),
                    edge_out=Segment2(p, Point2(float(nxt[vi, 0]), float(nxt[vi, 1]))),
                ))
    return turns


def _cuts_by_component(region: DepositionRegion, turns: list[SharpTurn]) -> dict[int, list[Segment2]]:
    cuts: dict[int, list[Segment2]] = {ci: [] for ci in range(len(region.components))}
    for turn in turns:
        ci = turn.ring_id[0]
        component = region.components[ci]
        v = turn.vertex
        for a, b in ((turn.edge_in.a, turn.edge_in.b), (turn.edge_out.b, turn.edge_out.a)):
            direction = (b.x - a.x, b.y - a.y)  # continue the edge through the vertex
            hit = ray_first_hit(v, direction, component)
            if hit is not None:
                cuts[ci].append(Segment2(v, hit))
    return cuts


def generate_cuts(region: DepositionRegion, turns: list[SharpTurn]) -> list[Segment2]:
    """Edge-extension cuts: one per incident edge whose extension ray
    travels through the region interior (only reflex turns produce any)."""
    grouped = _cuts_by_component(region, turns)
    return [cut for ci in sorted(grouped) for cut in grouped[ci]]


def decompose(region: DepositionRegion, cfg: PreprocessConfig) -> list[BasicElement]:
    """Partition the deposition region into basic elements.

    Elements get sequential ids in lexicographic centroid order (x, then
    y) so identical inputs produce identical ids.
    """
    turns = find_sharp_turns(region, cfg)
    grouped = _cuts_by_component(region, turns)
    faces = []
    for ci, component in enumerate(region.components):
        pieces = partition_by_cuts(component, grouped[ci])
        faces.extend(_merge_slivers([p.to_shapely() for p in pieces]))

    faces.sort(key=lambda f: (f.centroid.x, f.centroid.y))
    return [BasicElement(i, region_from_polygon(f)) for i, f in enumerate(faces)]


def _merge_slivers(faces):
    """Merge faces below SLIVER_AREA into their largest edge-adjacent neighbor."""
    faces = list(faces)
    while True:
        small = [i for i, f in enumerate(faces) if f.area < SLIVER_AREA]
        if not small or len(faces) == 1:
            return faces
        i = min(small, key=lambda k: faces[k].area)
        neighbors = [j for j, g in enumerate(faces)
                     if j != i and faces[i].intersection(g).length > EPS_GEOM]
        if not neighbors:
            return faces  # isolated sliver: keep it, conservation wins
        j = max(neighbors, key=lambda k: faces[k].area)
        merged = unary_union([faces[i], faces[j]])
        faces = [f for k, f in enumerate(faces) if k not in (i, j)] + [merged]
