"""2D polygon kernel: areas, turning angles, booleans, ray casting, partitions.

Everything works in double precision with millimetre units. Boolean
operations and arrangement extraction are delegated to shapely (GEOS);
scalar predicates (shoelace area, turning angles, rotating calipers) are
implemented directly so they stay independent of the boolean backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import LineString, MultiPolygon, Point, Polygon
from shapely.geometry.polygon import orient
from shapely.ops import polygonize, unary_union

from .errors import DegenerateGeometry, PreconditionViolated

EPS_GEOM = 1e-6   # mm: vertices closer than this are treated as coincident
EPS_AREA = 1e-6   # mm^2: overlaps below this are treated as empty
EPS_ANGLE = 0.1   # degrees: turning below this is treated as straight

CONVEX = "convex"
REFLEX = "reflex"
STRAIGHT = "straight"


@dataclass(frozen=True)
class Point2:
    """A point in the layer plane, millimetres."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DegenerateGeometry(f"non-finite point ({self.x}, {self.y})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Segment2:
    """An oriented segment; carrier for edge-extension cuts."""

    a: Point2
    b: Point2

    def __post_init__(self):
        if math.hypot(self.b.x - self.a.x, self.b.y - self.a.y) <= EPS_GEOM:
            raise DegenerateGeometry(f"zero-length segment at ({self.a.x}, {self.a.y})")

    def length(self) -> float:
        return math.hypot(self.b.x - self.a.x, self.b.y - self.a.y)


@dataclass(frozen=True, eq=False)
class Ring:
    """Closed polygon boundary stored as an open (n, 2) coordinate array."""

    coords: np.ndarray

    @classmethod
    def make(cls, points, validate: bool = True) -> "Ring":
        coords = np.asarray(
            [(p.x, p.y) if isinstance(p, Point2) else (float(p[0]), float(p[1])) for p in points],
            dtype=float,
        )
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise DegenerateGeometry("ring coordinates must be (n, 2)")
        if len(coords) >= 2 and np.hypot(*(coords[-1] - coords[0])) <= EPS_GEOM:
            coords = coords[:-1]  # drop explicit closing vertex
        ring = cls(coords)
        if validate:
            ring._validate()
        return ring

    def _validate(self):
        if not np.isfinite(self.coords).all():
            raise DegenerateGeometry("ring has non-finite coordinates")
        if len(self.coords) < 3:
            raise DegenerateGeometry(f"ring needs >= 3 vertices, got {len(self.coords)}")
        gaps = np.hypot(*(np.roll(self.coords, -1, axis=0) - self.coords).T)
        if (gaps <= EPS_GEOM).any():
            raise DegenerateGeometry("ring has coincident consecutive vertices")
        if abs(self.signed_area()) <= EPS_AREA:
            raise DegenerateGeometry("ring has (near) zero area")
        if not Polygon(self.coords).is_valid:
            raise DegenerateGeometry("ring is self-intersecting")

    def signed_area(self) -> float:
        x, y = self.coords[:, 0], self.coords[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def is_ccw(self) -> bool:
        return self.signed_area() > 0.0

    def reversed(self) -> "Ring":
        return Ring(self.coords[::-1].copy())

    def oriented(self, ccw: bool) -> "Ring":
        return self if self.is_ccw() == ccw else self.reversed()

    def simplified(self) -> "Ring":
        """Drop coincident and collinear (turning < EPS_ANGLE) vertices."""
        return Ring(simplify_closed(self.coords))

    def points(self) -> list[Point2]:
        return [Point2(float(x), float(y)) for x, y in self.coords]

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True, eq=False)
class Region:
    """Polygon with holes: CCW outer ring, CW hole rings."""

    outer: Ring
    holes: tuple[Ring, ...] = ()

    @classmethod
    def make(cls, outer: Ring, holes=(), validate: bool = True) -> "Region":
        outer = outer.oriented(ccw=True)
        holes = tuple(h.oriented(ccw=False) for h in holes)
        region = cls(outer, holes)
        if validate:
            region._validate()
        return region

    def _validate(self):
        shell = Polygon(self.outer.coords)
        for i, hole in enumerate(self.holes):
            hp = Polygon(hole.coords)
            if not shell.contains(hp.representative_point()) or hp.area >= shell.area:
                raise DegenerateGeometry(f"hole {i} is not inside the outer ring")
            for j in range(i):
                if hp.overlaps(Polygon(self.holes[j].coords)):
                    raise DegenerateGeometry(f"holes {j} and {i} overlap")
        if not self.to_shapely().is_valid:
            raise DegenerateGeometry("region is not a valid polygon with holes")
        if self.area() <= EPS_AREA:
            raise DegenerateGeometry("region has (near) zero area")

    def area(self) -> float:
        return self.outer.signed_area() + sum(h.signed_area() for h in self.holes)

    def to_shapely(self) -> Polygon:
        return Polygon(self.outer.coords, [h.coords for h in self.holes])

    def bounds(self) -> tuple[float, float, float, float]:
        xs, ys = self.outer.coords[:, 0], self.outer.coords[:, 1]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())


def turning_magnitudes(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex turning magnitude (degrees) and cross-product sign for a closed ring."""
    prev = np.roll(coords, 1, axis=0)
    nxt = np.roll(coords, -1, axis=0)
    v1 = coords - prev
    v2 = nxt - coords
    cross = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    dot = (v1 * v2).sum(axis=1)
    return np.degrees(np.arctan2(np.abs(cross), dot)), cross


def simplify_closed(coords: np.ndarray, eps_angle: float = EPS_ANGLE) -> np.ndarray:
    """Remove coincident and near-collinear vertices from a closed ring."""
    coords = np.asarray(coords, dtype=float)
    if len(coords) >= 2 and np.hypot(*(coords[-1] - coords[0])) <= EPS_GEOM:
        coords = coords[:-1]
    # coincident vertices first; collinear removal may cascade, so iterate
    for _ in range(len(coords)):
        gaps = np.hypot(*(np.roll(coords, -1, axis=0) - coords).T)
        keep = gaps > EPS_GEOM
        if not keep.all():
            coords = coords[keep]
            continue
        if len(coords) < 3:
            raise DegenerateGeometry("ring collapsed during simplification")
        mags, _ = turning_magnitudes(coords)
        keep = mags >= eps_angle
        if keep.all():
            break
        coords = coords[keep]
    if len(coords) < 3:
        raise DegenerateGeometry("ring collapsed during simplification")
    return coords


def signed_area(ring: Ring) -> float:
    """Shoelace signed area; positive iff counter-clockwise."""
    if len(ring) < 3:
        raise DegenerateGeometry("signed_area needs >= 3 vertices")
    return ring.signed_area()


def turning_angle(p_prev: Point2, p: Point2, p_next: Point2) -> tuple[float, str]:
    """Deviation from straight continuation at p, and its side.

    Returns (magnitude in degrees within [0, 180], side), where side is
    CONVEX / REFLEX for a traversal that keeps material on the left
    (positively oriented ring) and STRAIGHT below EPS_ANGLE.
    """
    v1 = (p.x - p_prev.x, p.y - p_prev.y)
    v2 = (p_next.x - p.x, p_next.y - p.y)
    if math.hypot(*v1) <= EPS_GEOM or math.hypot(*v2) <= EPS_GEOM:
        raise DegenerateGeometry("turning_angle: coincident points")
    cross = v1[0] * v2[1] - v1[1] * v2[0]
    dot = v1[0] * v2[0] + v1[1] * v2[1]
    magnitude = math.degrees(math.atan2(abs(cross), dot))
    if magnitude < EPS_ANGLE:
        return magnitude, STRAIGHT
    return magnitude, CONVEX if cross > 0.0 else REFLEX


def region_intersection_area(a: Region, b: Region) -> float:
    """Area of a ∩ b, >= 0."""
    return float(a.to_shapely().intersection(b.to_shapely()).area)


def region_union(parts: list[Region]) -> list[Region]:
    """Union of the parts, returned as its connected components."""
    if not parts:
        return []
    merged = unary_union([p.to_shapely() for p in parts])
    return regions_from_shapely(merged)


def ray_first_hit(origin: Point2, direction, region: Region) -> Point2 | None:
    """First boundary point strictly beyond `origin` along the ray.

    `origin` must lie on the region boundary. Returns None when the open
    ray leaves the region immediately (including riding along the
    boundary), so a non-None result always spans region interior.
    """
    dx, dy = (direction.x, direction.y) if isinstance(direction, Point2) else (
        float(direction[0]), float(direction[1]))
    norm = math.hypot(dx, dy)
    if norm <= 0.0:
        raise PreconditionViolated("ray direction must be nonzero")
    dx, dy = dx / norm, dy / norm
    poly = region.to_shapely()
    boundary = poly.boundary
    if boundary.distance(Point(origin.x, origin.y)) > EPS_GEOM:
        raise PreconditionViolated("ray origin is not on the region boundary")

    xmin, ymin, xmax, ymax = poly.bounds
    reach = 2.0 * math.hypot(xmax - xmin, ymax - ymin) + 1.0
    probe = LineString([(origin.x, origin.y), (origin.x + dx * reach, origin.y + dy * reach)])
    hits = probe.intersection(boundary)

    best_t, best_pt = None, None
    for x, y in _intersection_points(hits):
        t = (x - origin.x) * dx + (y - origin.y) * dy
        if t > EPS_GEOM and (best_t is None or t < best_t):
            best_t, best_pt = t, (x, y)
    if best_pt is None:
        return None
    mid = Point(origin.x + dx * best_t / 2.0, origin.y + dy * best_t / 2.0)
    if not poly.contains(mid):
        return None  # ray starts outside or rides the boundary
    return Point2(best_pt[0], best_pt[1])


def _intersection_points(geom):
    """Flatten an intersection result into candidate (x, y) hit points."""
    if geom.is_empty:
        return
    if geom.geom_type == "Point":
        yield geom.x, geom.y
    elif geom.geom_type == "LineString":
        yield from ((c[0], c[1]) for c in geom.coords)
    elif geom.geom_type in ("MultiPoint", "MultiLineString", "GeometryCollection"):
        for g in geom.geoms:
            yield from _intersection_points(g)


def partition_by_cuts(region: Region, cuts: list[Segment2]) -> list[Region]:
    """Faces of the planar arrangement of boundary ∪ cuts inside the region."""
    poly = region.to_shapely()
    tolerant = poly.buffer(EPS_GEOM) if cuts else poly
    lines = [LineString(np.vstack([region.outer.coords, region.outer.coords[:1]]))]
    for hole in region.holes:
        lines.append(LineString(np.vstack([hole.coords, hole.coords[:1]])))
    for i, cut in enumerate(cuts):
        seg = LineString([cut.a.as_tuple(), cut.b.as_tuple()])
        if not tolerant.covers(seg):
            raise PreconditionViolated(f"cut {i} leaves the region")
        lines.append(seg)

    faces: list[Region] = []
    for face in polygonize(unary_union(lines)):
        # nested rings make polygonize emit stacked faces; clipping against
        # the region both removes hole faces and carves holes out of the
        # face that surrounds them
        piece = face.intersection(poly)
        for sub in _polygons_of(piece):
            if sub.area > EPS_AREA:
                faces.append(region_from_polygon(sub))
    return faces


def _polygons_of(geom) -> list[Polygon]:
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    if geom.geom_type == "GeometryCollection":
        out = []
        for g in geom.geoms:
            out.extend(_polygons_of(g))
        return out
    return []


def region_from_polygon(poly: Polygon) -> Region:
    """Convert a valid shapely polygon into a Region (no re-validation)."""
    poly = orient(poly)  # exterior CCW, holes CW
    outer = Ring.make(list(poly.exterior.coords), validate=False)
    holes = tuple(Ring.make(list(r.coords), validate=False) for r in poly.interiors)
    return Region(outer, holes)


def regions_from_shapely(geom) -> list[Region]:
    return [region_from_polygon(p) for p in _polygons_of(geom) if p.area > EPS_AREA]


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, CCW without repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        raise DegenerateGeometry("convex hull needs >= 3 distinct points")
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(iterable):
        chain: list[np.ndarray] = []
        for p in iterable:
            while len(chain) >= 2:
                a, b = chain[-1] - chain[-2], p - chain[-2]
                if a[0] * b[1] - a[1] * b[0] > 0:
                    break
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DegenerateGeometry("points are collinear")
    return hull


def min_area_enclosing_rectangle(region: Region) -> tuple[float, float, float, float, float]:
    """Minimum-area enclosing rectangle via rotating calipers.

    Returns (w, h, tx, ty, theta): corner (tx, ty), side w along the
    direction theta (degrees in [0, 180)), side h perpendicular to it.
    """
    hull = convex_hull(region.outer.coords)
    edges = np.roll(hull, -1, axis=0) - hull
    best = None
    for ex, ey in edges:
        phi = math.atan2(ey, ex)
        c, s = math.cos(-phi), math.sin(-phi)
        rx = hull[:, 0] * c - hull[:, 1] * s
        ry = hull[:, 0] * s + hull[:, 1] * c
        w = float(rx.max() - rx.min())
        h = float(ry.max() - ry.min())
        if best is None or w * h < best[0]:
            best = (w * h, w, h, float(rx.min()), float(ry.min()), phi)
    _, w, h, rx0, ry0, phi = best
    c, s = math.cos(phi), math.sin(phi)
    tx = rx0 * c - ry0 * s
    ty = rx0 * s + ry0 * c
    theta = math.degrees(phi) % 180.0
    return w, h, tx, ty, theta
