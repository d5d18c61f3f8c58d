"""Identify-and-segment orchestration.

The outer loop repeatedly runs the GA over the remaining basic elements,
stores the winning merge as a sub-region, deletes its elements and
continues until none remain. A roughing-finishing variant runs the loop
twice (loose then strict stopping criterion), feeding the rough
sub-regions back in as the finishing stage's basic elements. Independent
seeds can be run concurrently to produce diversified segmentations.
"""

from __future__ import annotations

import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PreconditionViolated
from .ga import (
    Candidate,
    Chromosome,
    EvalContext,
    GAConfig,
    SearchTrace,
    count_sharp_turns,
    fitness,
    normalized_rect_chromosome,
    rect_polygon,
    run_ga,
)
from .geometry import Region, min_area_enclosing_rectangle
from .layer_model import DepositionRegion, Layer, build_deposition_region, classify_loops
from .preprocess import BasicElement, PreprocessConfig, decompose

SINGLE = "single"
ROUGH_FINISH = "rough_finish"


@dataclass(frozen=True)
class StrategyConfig:
    mode: str = SINGLE
    n_s_single: int = 60
    n_s_rough: int = 20
    n_s_finish: int = 30

    def __post_init__(self):
        if self.mode not in (SINGLE, ROUGH_FINISH):
            raise ValueError(f"unknown strategy mode {self.mode!r}")
        if min(self.n_s_single, self.n_s_rough, self.n_s_finish) < 1:
            raise ValueError("all stopping criteria must be >= 1")


@dataclass(frozen=True)
class SubRegion:
    id: int
    region: Region
    source_element_ids: frozenset[int]
    iteration_index: int
    chromosome: Chromosome
    s0: float
    s1: float
    s2: float
    s3: float
    n_st: int
    fitness: float


@dataclass
class SegmentationResult:
    sub_regions: list[SubRegion]
    per_iteration_trace: list[SearchTrace]
    per_iteration_time: list[float]
    total_time: float
    seed: int
    config: GAConfig
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    rough: "SegmentationResult | None" = None  # stage-1 report in rough_finish mode

    def total_area(self) -> float:
        return sum(sr.region.area() for sr in self.sub_regions)


@dataclass(frozen=True)
class PipelineOutcome:
    """Per-seed result of a diversified run; error text instead of aborting siblings."""

    seed: int
    result: SegmentationResult | None = None
    error: str | None = None


def _sub_region_from_candidate(cand: Candidate, index: int) -> SubRegion:
    return SubRegion(
        id=index, region=cand.merged, source_element_ids=cand.element_ids,
        iteration_index=index, chromosome=cand.chromosome,
        s0=cand.s0, s1=cand.s1, s2=cand.s2, s3=cand.s3,
        n_st=cand.n_st, fitness=cand.fitness,
    )


def _single_element_candidate(element: BasicElement, context: EvalContext,
                              cfg: GAConfig) -> Candidate:
    """Short-circuit for a lone element: its own enclosing rectangle wins."""
    chromo = normalized_rect_chromosome(*min_area_enclosing_rectangle(element.region))
    rect = rect_polygon(chromo)
    s0 = rect.intersection(context.deposition).area
    in_material = rect.intersection(context.material).area
    s3 = max(in_material - s0, 0.0)
    s2 = max(rect.area - in_material, 0.0)
    poly = element.region.to_shapely()
    n_st = count_sharp_turns(poly, cfg.alpha_max)
    s1 = poly.area
    return Candidate(
        chromosome=chromo, element_ids=frozenset([element.id]),
        merged=element.region, s0=s0, s1=s1, s2=s2, s3=s3, n_st=n_st,
        fitness=fitness(s0, s1, s2, s3, n_st, cfg),
    )


def identify_and_segment(elements: list[BasicElement], context: EvalContext,
                         ga_cfg: GAConfig, rng: np.random.Generator,
                         seed: int = 0,
                         strategy: StrategyConfig | None = None) -> SegmentationResult:
    """Extract the best quasi-quadrilateral repeatedly until no element remains."""
    if not elements:
        raise ValueError("element set must be non-empty")
    remaining = list(elements)
    sub_regions: list[SubRegion] = []
    traces: list[SearchTrace] = []
    times: list[float] = []
    t_start = time.perf_counter()
    while remaining:
        t0 = time.perf_counter()
        if len(remaining) == 1:
            cand = _single_element_candidate(remaining[0], context, ga_cfg)
            trace = SearchTrace([], 0, time.perf_counter() - t0)
        else:
            cand, trace = run_ga(remaining, context, ga_cfg, rng)
        index = len(sub_regions)
        sub_regions.append(_sub_region_from_candidate(cand, index))
        remaining = [e for e in remaining if e.id not in cand.element_ids]
        traces.append(trace)
        times.append(time.perf_counter() - t0)
    return SegmentationResult(
        sub_regions=sub_regions, per_iteration_trace=traces,
        per_iteration_time=times, total_time=time.perf_counter() - t_start,
        seed=seed, config=ga_cfg, strategy=strategy or StrategyConfig(),
    )


def elements_from_sub_regions(sub_regions: list[SubRegion]) -> list[BasicElement]:
    """Re-id sub-regions as the next stage's basic elements (input order)."""
    return [BasicElement(i, sr.region) for i, sr in enumerate(sub_regions)]


def roughing_finishing(elements: list[BasicElement], context: EvalContext,
                       ga_cfg: GAConfig, strategy: StrategyConfig,
                       rng: np.random.Generator, seed: int = 0) -> SegmentationResult:
    """Loose pass to coarsen the element set, then a stricter final pass."""
    if strategy.mode != ROUGH_FINISH:
        raise ValueError("roughing_finishing requires mode=rough_finish")
    rough_cfg = replace(ga_cfg, n_s=strategy.n_s_rough)
    rough = identify_and_segment(elements, context, rough_cfg, rng, seed, strategy)

    finish_cfg = replace(ga_cfg, n_s=strategy.n_s_finish)
    stage2 = elements_from_sub_regions(rough.sub_regions)
    finish = identify_and_segment(stage2, context, finish_cfg, rng, seed, strategy)

    # provenance composes back to the original element ids
    rough_ids = {i: sr.source_element_ids for i, sr in enumerate(rough.sub_regions)}
    final_subs = [
        replace(sr, source_element_ids=frozenset().union(
            *(rough_ids[i] for i in sr.source_element_ids)))
        for sr in finish.sub_regions
    ]
    return SegmentationResult(
        sub_regions=final_subs,
        per_iteration_trace=rough.per_iteration_trace + finish.per_iteration_trace,
        per_iteration_time=rough.per_iteration_time + finish.per_iteration_time,
        total_time=rough.total_time + finish.total_time,
        seed=seed, config=ga_cfg, strategy=strategy, rough=rough,
    )


def segment_layer(layer: Layer, pre_cfg: PreprocessConfig, ga_cfg: GAConfig,
                  strategy: StrategyConfig, seed: int) -> SegmentationResult:
    """Full pipeline for one seed: classify, decompose, then segment."""
    classified = classify_loops(layer)
    deposition = build_deposition_region(classified)
    elements = decompose(deposition, pre_cfg)
    context = EvalContext.from_deposition(deposition)
    rng = np.random.default_rng(seed)
    if strategy.mode == ROUGH_FINISH:
        return roughing_finishing(elements, context, ga_cfg, strategy, rng, seed)
    cfg = replace(ga_cfg, n_s=strategy.n_s_single)
    return identify_and_segment(elements, context, cfg, rng, seed, strategy)


def _pipeline_worker(args) -> PipelineOutcome:
    layer, pre_cfg, ga_cfg, strategy, seed = args
    try:
        return PipelineOutcome(seed, segment_layer(layer, pre_cfg, ga_cfg, strategy, seed))
    except Exception:
        return PipelineOutcome(seed, error=traceback.format_exc())


def parallel_diversified(layer: Layer, pre_cfg: PreprocessConfig, ga_cfg: GAConfig,
                         strategy: StrategyConfig, seeds: list[int],
                         max_workers: int | None = None) -> list[PipelineOutcome]:
    """Run one fully independent pipeline per seed, concurrently.

    Results come back in input-seed order; a failing seed reports its
    error without aborting the others.
    """
    if not seeds:
        raise PreconditionViolated("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise PreconditionViolated("seeds must be distinct")

    jobs = [(layer, pre_cfg, ga_cfg, strategy, seed) for seed in seeds]
    workers = min(len(jobs), max_workers) if max_workers else len(jobs)
    if len(jobs) == 1 or workers <= 1:
        return [_pipeline_worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_pipeline_worker, jobs))
