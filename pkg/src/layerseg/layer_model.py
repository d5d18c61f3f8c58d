"""Layer parsing model: loop roles and deposition-region construction.

A layer is a set of closed loops. Material loops enclose area to deposit,
hole loops enclose area to leave empty. When no roles are declared they
are assigned by containment parity: even nesting depth -> material, odd
-> hole.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from shapely.geometry import Polygon

from .errors import InvalidLayer
from .geometry import Region, Ring

MATERIAL = "material"
HOLE = "hole"


@dataclass(frozen=True)
class Loop:
    ring: Ring
    declared_role: str | None = None


@dataclass(frozen=True)
class Layer:
    loops: tuple[Loop, ...]
    meta: dict = field(default_factory=dict)

    @classmethod
    def make(cls, loops, meta=None) -> "Layer":
        return cls(tuple(loops), dict(meta or {}))


@dataclass(frozen=True)
class DepositionRegion:
    """Material area minus enclosed holes, one Region per material loop."""

    components: tuple[Region, ...]

    def area(self) -> float:
        return sum(c.area() for c in self.components)

    def bounds(self) -> tuple[float, float, float, float]:
        boxes = [c.bounds() for c in self.components]
        return (min(b[0] for b in boxes), min(b[1] for b in boxes),
                max(b[2] for b in boxes), max(b[3] for b in boxes))


def _polygons(layer: Layer) -> list[Polygon]:
    return [Polygon(loop.ring.coords) for loop in layer.loops]


def _check_non_crossing(polys: list[Polygon]):
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if polys[i].overlaps(polys[j]) or polys[i].equals(polys[j]):
                raise InvalidLayer(f"loops {i} and {j} cross")


def _nesting_depths(polys: list[Polygon]) -> list[int]:
    reps = [p.representative_point() for p in polys]
    depths = []
    for i in range(len(polys)):
        depths.append(sum(1 for j in range(len(polys))
                          if j != i and polys[j].contains(reps[i])))
    return depths


def classify_loops(layer: Layer) -> Layer:
    """Resolve every loop role, honoring declared roles or using parity."""
    if not layer.loops:
        raise InvalidLayer("layer has no loops")
    polys = _polygons(layer)
    _check_non_crossing(polys)

    declared = [loop.declared_role for loop in layer.loops]
    if all(r is not None for r in declared):
        for i, r in enumerate(declared):
            if r not in (MATERIAL, HOLE):
                raise InvalidLayer(f"loop {i} has unknown role {r!r}")
        resolved = list(layer.loops)
    elif any(r is not None for r in declared):
        bad = next(i for i, r in enumerate(declared) if r is None)
        raise InvalidLayer(f"loop {bad} is untagged while other loops are tagged")
    else:
        depths = _nesting_depths(polys)
        resolved = [replace(loop, declared_role=MATERIAL if d % 2 == 0 else HOLE)
                    for loop, d in zip(layer.loops, depths)]

    if not any(loop.declared_role == MATERIAL for loop in resolved):
        raise InvalidLayer("layer has no material loop")
    return Layer(tuple(resolved), layer.meta)


def build_deposition_region(layer: Layer) -> DepositionRegion:
    """Pair each material loop with the holes immediately nested in it."""
    if any(loop.declared_role is None for loop in layer.loops):
        raise InvalidLayer("loop roles are not resolved; run classify_loops first")
    polys = _polygons(layer)
    _check_non_crossing(polys)
    depths = _nesting_depths(polys)
    reps = [p.representative_point() for p in polys]

    def immediate_parent(i: int) -> int | None:
        parents = [j for j in range(len(polys))
                   if j != i and polys[j].contains(reps[i])]
        if not parents:
            return None
        return min(parents, key=lambda j: polys[j].area)

    components = []
    for i, loop in enumerate(layer.loops):
        if loop.declared_role != MATERIAL:
            continue
        parent = immediate_parent(i)
        if parent is not None and layer.loops[parent].declared_role == MATERIAL:
            raise InvalidLayer(f"material loop {i} is directly inside material loop {parent}")
        holes = []
        for j, other in enumerate(layer.loops):
            if other.declared_role == HOLE and depths[j] == depths[i] + 1 \
                    and polys[i].contains(reps[j]):
                holes.append(other.ring.simplified())
        components.append(Region.make(loop.ring.simplified(), holes))

    for j, loop in enumerate(layer.loops):
        if loop.declared_role != HOLE:
            continue
        parent = immediate_parent(j)
        if parent is None or layer.loops[parent].declared_role != MATERIAL:
            raise InvalidLayer(f"hole loop {j} is not inside any material loop")

    return DepositionRegion(tuple(components))
