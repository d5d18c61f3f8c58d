"""Genetic search for the largest quasi-quadrilateral merge of basic elements.

A chromosome is a moving rectangle [w, h, tx, ty, theta] anchored at
corner (tx, ty) with side w along direction theta and side h
perpendicular to it. Decoding merges every basic element the rectangle
overlaps; the merged shape is scored by

    F = -(c0*S0 + c1*S1) / (exp(|4 - N_st|) + c2*S2 + c3*S3)

where S0 is rectangle ∩ deposition area, S1 the merged-solution area,
S2 the rectangle area outside the material loops, S3 the rectangle area
inside holes, and N_st the merged boundary's sharp-turn count. Smaller F
is better. c2 switches to 1 only when S2 exceeds half the rectangle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely import STRtree
from shapely.geometry import Polygon
from shapely.ops import unary_union

from .errors import ResourceExhausted
from .geometry import (
    EPS_AREA,
    EPS_GEOM,
    Region,
    region_from_polygon,
    simplify_closed,
    turning_magnitudes,
)
from .layer_model import DepositionRegion
from .preprocess import BasicElement

STALL_TOL = 1e-9        # fitness change below this counts as "unchanged"
RETRY_LIMIT = 10_000    # validity retries per operator application
EXP_ARG_CAP = 700.0     # keep exp() finite for absurd sharp-turn counts


@dataclass(frozen=True)
class Chromosome:
    w: float
    h: float
    tx: float
    ty: float
    theta: float  # degrees, 0 < theta < 180

    def __post_init__(self):
        if not (self.w > 0.0 and self.h > 0.0):
            raise ValueError(f"rectangle sides must be positive, got w={self.w} h={self.h}")
        if not 0.0 < self.theta < 180.0:
            raise ValueError(f"theta must be in (0, 180), got {self.theta}")

    def genes(self) -> tuple[float, float, float, float, float]:
        return (self.w, self.h, self.tx, self.ty, self.theta)

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class GAConfig:
    n_ps: int = 40            # population size
    n_new: float = 90.0       # percent of the population used as parents
    rho: float = 0.5          # X > rho -> mutation, else crossover
    n_s: int = 60             # stop after this many stalled generations
    alpha_max: float = 30.0   # sharp-turn threshold for N_st, degrees
    c0: float = 0.001
    c1: float = 1.0
    c3: float = 1.0
    c2_threshold: float = 0.5  # c2 activates when s2 > threshold * rect area
    max_generations: int = 5000
    rng_seed: int | None = None

    def __post_init__(self):
        if self.n_ps < 1:
            raise ValueError("population size must be >= 1")
        if not 0.0 <= self.n_new <= 100.0:
            raise ValueError("n_new is a percentage")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        if self.n_s < 1 or self.max_generations < 1:
            raise ValueError("n_s and max_generations must be >= 1")


@dataclass(frozen=True)
class Candidate:
    chromosome: Chromosome
    element_ids: frozenset[int]
    merged: Region
    s0: float
    s1: float
    s2: float
    s3: float
    n_st: int
    fitness: float


@dataclass
class SearchTrace:
    best_fitness: list[float] = field(default_factory=list)
    generations: int = 0
    wall_seconds: float = 0.0


@dataclass(frozen=True)
class EvalContext:
    """Layer-level geometry the fitness terms are measured against."""

    deposition: shapely.Geometry   # union of material-minus-holes components
    material: shapely.Geometry     # union of filled material outlines

    @classmethod
    def from_deposition(cls, region: DepositionRegion) -> "EvalContext":
        deposition = unary_union([c.to_shapely() for c in region.components])
        material = unary_union([Polygon(c.outer.coords) for c in region.components])
        return cls(deposition, material)


def rect_region(c: Chromosome) -> Region:
    """The chromosome's rectangle as a 4-vertex CCW region."""
    return region_from_polygon(rect_polygon(c))


def rect_polygon(c: Chromosome) -> Polygon:
    rad = math.radians(c.theta)
    ux, uy = math.cos(rad), math.sin(rad)
    p0 = (c.tx, c.ty)
    p1 = (c.tx + c.w * ux, c.ty + c.w * uy)
    p2 = (p1[0] - c.h * uy, p1[1] + c.h * ux)
    p3 = (c.tx - c.h * uy, c.ty + c.h * ux)
    return Polygon([p0, p1, p2, p3])


def normalized_rect_chromosome(w: float, h: float, tx: float, ty: float,
                               theta: float) -> Chromosome:
    """Build a chromosome from a rectangle whose angle may be 0 (mod 180).

    theta = 0 is outside the gene range; the same rectangle is re-anchored
    at the next corner with sides swapped, giving theta = 90.
    """
    theta = theta % 180.0
    if theta < 1e-12 or 180.0 - theta < 1e-12:
        return Chromosome(h, w, tx + w, ty, 90.0)
    return Chromosome(w, h, tx, ty, theta)


def count_sharp_turns(poly: Polygon, alpha_max: float) -> int:
    """Sharp turns on all rings of a polygon, after collinear cleanup."""
    total = 0
    for ring in [poly.exterior, *poly.interiors]:
        coords = simplify_closed(np.asarray(ring.coords))
        mags, _ = turning_magnitudes(coords)
        total += int((mags > alpha_max).sum())
    return total


def fitness(s0: float, s1: float, s2: float, s3: float, n_st: int,
            cfg: GAConfig) -> float:
    """Eq-style score; rectangle area is recovered as s0 + s2 + s3."""
    rect_area = s0 + s2 + s3
    c2 = 1.0 if s2 > cfg.c2_threshold * rect_area else 0.0
    denom = math.exp(min(abs(4.0 - n_st), EXP_ARG_CAP)) + c2 * s2 + cfg.c3 * s3
    return -(cfg.c0 * s0 + cfg.c1 * s1) / denom


@dataclass(frozen=True)
class _MergedComponent:
    poly: Polygon
    ids: frozenset[int]
    area: float
    n_st: int


class RectangleSearch:
    """GA engine bound to one basic-element set and one evaluation context.

    Decode results are cached by element subset and fitness by gene
    vector; both are pure so caching does not change behavior.
    """

    def __init__(self, elements: list[BasicElement], context: EvalContext,
                 cfg: GAConfig):
        if not elements:
            raise ValueError("element set must be non-empty")
        self.cfg = cfg
        self.context = context
        self.elements = list(elements)
        self.ids = np.array([e.id for e in self.elements])
        self.polys = [e.region.to_shapely() for e in self.elements]
        self.poly_arr = np.array(self.polys, dtype=object)
        self.tree = STRtree(self.polys)
        self.reps = [p.representative_point() for p in self.polys]
        xs = np.concatenate([np.asarray(p.bounds)[[0, 2]] for p in self.polys])
        ys = np.concatenate([np.asarray(p.bounds)[[1, 3]] for p in self.polys])
        self.xmin, self.xmax = float(xs.min()), float(xs.max())
        self.ymin, self.ymax = float(ys.min()), float(ys.max())
        self.width = self.xmax - self.xmin
        self.height = self.ymax - self.ymin
        self._subset_cache: dict[frozenset[int], list[_MergedComponent]] = {}
        self._eval_cache: dict[tuple, Candidate | None] = {}

    # -- decoding -----------------------------------------------------

    def _select(self, rect: Polygon) -> np.ndarray:
        """Indices of elements overlapping the rectangle by more than EPS_AREA."""
        idx = self.tree.query(rect)
        if len(idx) == 0:
            return idx
        areas = shapely.area(shapely.intersection(rect, self.poly_arr[idx]))
        return np.sort(idx[areas > EPS_AREA])

    def is_valid(self, c: Chromosome) -> bool:
        return len(self._select(rect_polygon(c))) > 0

    def _merged_components(self, key: frozenset[int],
                           idx: np.ndarray) -> list[_MergedComponent]:
        cached = self._subset_cache.get(key)
        if cached is not None:
            return cached
        union = unary_union([self.polys[i] for i in idx])
        parts = [union] if union.geom_type == "Polygon" else list(union.geoms)
        components = []
        for part in parts:
            ids = frozenset(int(self.ids[i]) for i in idx
                            if part.contains(self.reps[i]))
            components.append(_MergedComponent(
                part, ids, float(part.area),
                count_sharp_turns(part, self.cfg.alpha_max)))
        self._subset_cache[key] = components
        return components

    def decode(self, c: Chromosome) -> Candidate | None:
        """Merge overlapped elements; None when nothing is overlapped.

        A disconnected merge is restricted to the component with the
        largest rectangle overlap; the other components' ids are dropped.
        """
        key = c.genes()
        if key in self._eval_cache:
            return self._eval_cache[key]

        rect = rect_polygon(c)
        idx = self._select(rect)
        if len(idx) == 0:
            self._eval_cache[key] = None
            return None
        components = self._merged_components(
            frozenset(int(self.ids[i]) for i in idx), idx)
        if len(components) == 1:
            chosen = components[0]
        else:
            overlaps = [rect.intersection(comp.poly).area for comp in components]
            chosen = components[int(np.argmax(overlaps))]

        s0 = rect.intersection(self.context.deposition).area
        in_material = rect.intersection(self.context.material).area
        s3 = max(in_material - s0, 0.0)
        s2 = max(rect.area - in_material, 0.0)
        cand = Candidate(
            chromosome=c,
            element_ids=chosen.ids,
            merged=region_from_polygon(chosen.poly),
            s0=s0, s1=chosen.area, s2=s2, s3=s3, n_st=chosen.n_st,
            fitness=fitness(s0, chosen.area, s2, s3, chosen.n_st, self.cfg),
        )
        self._eval_cache[key] = cand
        return cand

    # -- gene sampling ------------------------------------------------

    def _draw_gene(self, position: int, rng: np.random.Generator) -> float:
        if position == 0:
            return float(rng.uniform(EPS_GEOM, self.width))
        if position == 1:
            return float(rng.uniform(EPS_GEOM, self.height))
        if position == 2:
            return float(rng.uniform(self.xmin, self.xmax))
        if position == 3:
            return float(rng.uniform(self.ymin, self.ymax))
        theta = 0.0
        while theta <= 0.0:
            theta = float(rng.uniform(0.0, 180.0))
        return theta

    def _random_chromosome(self, rng: np.random.Generator) -> Chromosome:
        tx = self._draw_gene(2, rng)
        ty = self._draw_gene(3, rng)
        w = self._draw_gene(0, rng)
        h = self._draw_gene(1, rng)
        theta = self._draw_gene(4, rng)
        return Chromosome(w, h, tx, ty, theta)

    def init_population(self, rng: np.random.Generator) -> list[Chromosome]:
        """n_ps valid chromosomes drawn inside the element bounding box."""
        limit = RETRY_LIMIT * self.cfg.n_ps
        population = []
        failures = 0
        while len(population) < self.cfg.n_ps:
            c = self._random_chromosome(rng)
            if self.is_valid(c):
                population.append(c)
                failures = 0
            else:
                failures += 1
                if failures >= limit:
                    raise ResourceExhausted(
                        f"could not draw a valid chromosome in {limit} attempts")
        return population

    # -- operators ----------------------------------------------------

    def mutate(self, parent: Chromosome, rng: np.random.Generator) -> Chromosome:
        """Regenerate 1..5 genes; keep the offspring only if strictly fitter."""
        k = int(rng.integers(1, 6))
        positions = sorted(int(p) for p in rng.choice(5, size=k, replace=False))
        offspring = None
        for _ in range(RETRY_LIMIT):
            genes = list(parent.genes())
            for pos in positions:
                genes[pos] = self._draw_gene(pos, rng)
            c = Chromosome(*genes)
            if self.is_valid(c):
                offspring = c
                break
        if offspring is None:
            return parent
        return offspring if self.decode(offspring).fitness < self.decode(parent).fitness \
            else parent

    def crossover(self, parent1: Chromosome, parent2: Chromosome,
                  rng: np.random.Generator) -> Chromosome:
        """Copy 1..5 genes from the second parent; elitist acceptance."""
        offspring = None
        for _ in range(RETRY_LIMIT):
            k = int(rng.integers(1, 6))
            positions = rng.choice(5, size=k, replace=False)
            genes = list(parent1.genes())
            donor = parent2.genes()
            for pos in positions:
                genes[pos] = donor[pos]
            c = Chromosome(*genes)
            if self.is_valid(c):
                offspring = c
                break
        if offspring is None:
            return parent1
        return offspring if self.decode(offspring).fitness < self.decode(parent1).fitness \
            else parent1

    def reproduce(self, generation: list[Chromosome],
                  rng: np.random.Generator) -> list[Chromosome]:
        """Next generation: n_new% of chromosomes bred, the rest copied."""
        n = len(generation)
        m = round(n * self.cfg.n_new / 100.0)
        pool = sorted(int(i) for i in rng.choice(n, size=m, replace=False))
        pool_set = set(pool)
        out = list(generation)
        for i in pool:
            x = float(rng.random())
            if x > self.cfg.rho:
                out[i] = self.mutate(generation[i], rng)
            else:
                j = pool[int(rng.integers(0, m))]
                out[i] = self.crossover(generation[i], generation[j], rng)
        assert len(out) == n and all(i in pool_set or out[i] is generation[i]
                                     for i in range(n))
        return out


def run_ga(elements: list[BasicElement], context: EvalContext, cfg: GAConfig,
           rng: np.random.Generator) -> tuple[Candidate, SearchTrace]:
    """Evolve until the best fitness stalls for n_s generations.

    Returns the all-time best candidate and the per-generation
    best-fitness trace (non-increasing by elitist acceptance).
    """
    search = RectangleSearch(elements, context, cfg)
    t0 = time.perf_counter()
    generation = search.init_population(rng)
    best = min((search.decode(c) for c in generation), key=lambda cand: cand.fitness)
    trace = [best.fitness]
    stall = 0
    while stall < cfg.n_s and len(trace) < cfg.max_generations:
        generation = search.reproduce(generation, rng)
        gen_best = min((search.decode(c) for c in generation),
                       key=lambda cand: cand.fitness)
        if trace[-1] - gen_best.fitness > STALL_TOL:
            stall = 0
        else:
            stall += 1
        if gen_best.fitness < best.fitness:
            best = gen_best
        trace.append(gen_best.fitness)
    return best, SearchTrace(trace, len(trace), time.perf_counter() - t0)


def decode(c: Chromosome, elements: list[BasicElement],
           context: EvalContext, cfg: GAConfig | None = None) -> Candidate | None:
    """One-off decode without reusing an engine (convenience wrapper)."""
    return RectangleSearch(elements, context, cfg or GAConfig()).decode(c)


def overlap_areas(c: Chromosome, context: EvalContext) -> tuple[float, float, float]:
    """(s0, s2, s3) for the chromosome's rectangle against the layer geometry."""
    rect = rect_polygon(c)
    s0 = rect.intersection(context.deposition).area
    in_material = rect.intersection(context.material).area
    return s0, max(rect.area - in_material, 0.0), max(in_material - s0, 0.0)
