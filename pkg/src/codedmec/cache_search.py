"""Greedy search over coded-cache decisions for a fixed compute decision.

Candidate tasks (those with at least one matching compute entry) are sorted
by sampled request weight; prefixes of that order are tried from longest to
empty, evaluating the sampled bandwidth only when the derived split changes.
The search runs once per cached data type and the better type wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admm import SolveResult, SolverParams, solve_p2
from .bandwidth import average_bandwidth
from .delivery import CacheDecision, derive_t
from .model import ComputeDecision, SampleSet, Scenario, check_energy_feasible

__all__ = [
    "SearchStep",
    "VariantResult",
    "CacheChoice",
    "PipelineResult",
    "solve_p3_variant",
    "solve_p3",
    "optimize_pipeline",
]


@dataclass(frozen=True)
class SearchStep:
    num: int                  # prefix length tried
    share_count: int          # derived split at this prefix
    evaluated: bool           # False when skipped by the equal-split guard
    bandwidth_hz: float | None


@dataclass(frozen=True)
class VariantResult:
    cache: CacheDecision
    bandwidth_hz: float
    steps: list


@dataclass(frozen=True)
class CacheChoice:
    cache: CacheDecision      # winning decision; data_type records d*
    bandwidth_hz: float
    variants: dict            # data type -> VariantResult


def _require_usable(x: ComputeDecision, s: Scenario) -> np.ndarray:
    if not x.binary:
        raise ValueError("cache search requires a binary compute decision")
    if not check_energy_feasible(s, x):
        raise ValueError("cache search requires an energy-feasible compute decision")
    return x.matrix >= 0.5


def solve_p3_variant(
    d: int,
    x: ComputeDecision,
    s: Scenario,
    samples: SampleSet,
    exhaustive_prefix: bool = False,
) -> VariantResult:
    """Search prefix caches of the popularity order for one data type.

    With ``exhaustive_prefix`` every prefix length is evaluated, ignoring
    the equal-split skip; useful to measure what the guard gives up.
    """
    xb = _require_usable(x, s)
    demands = samples.demands
    x_req = xb[np.arange(s.num_devices)[None, :], demands]   # (N, K)

    match = x_req if d == 1 else ~x_req
    weights = np.zeros(s.num_tasks)
    candidates = []
    for f in range(s.num_tasks):
        if not (np.any(xb[:, f]) if d == 1 else not np.all(xb[:, f])):
            continue
        candidates.append(f)
        weights[f] = float(np.sum((demands == f) & match))
    order = sorted(candidates, key=lambda f: (-weights[f], f))

    def prefix_decision(num: int) -> CacheDecision:
        mask = np.zeros(s.num_tasks, dtype=np.int64)
        mask[order[:num]] = 1
        return derive_t(mask, d, s)

    steps: list[SearchStep] = []
    if not order:
        cd = prefix_decision(0)
        value = average_bandwidth(s, cd, x, samples)
        steps.append(SearchStep(0, 0, True, value))
        return VariantResult(cd, value, steps)

    cd = prefix_decision(len(order))
    last_split = cd.share_count
    value = average_bandwidth(s, cd, x, samples)
    best_cd, best_value = cd, value
    seen_empty = cd.num_cached == 0
    steps.append(SearchStep(len(order), last_split, True, value))

    for num in range(len(order) - 1, -1, -1):
        cd = prefix_decision(num)
        split = cd.share_count
        skip = split == last_split or (cd.num_cached == 0 and seen_empty)
        if exhaustive_prefix:
            skip = False
        if skip:
            steps.append(SearchStep(num, split, False, None))
            continue
        value = average_bandwidth(s, cd, x, samples)
        if value <= best_value:
            best_cd, best_value = cd, value
        last_split = split
        seen_empty = seen_empty or cd.num_cached == 0
        steps.append(SearchStep(num, split, True, value))
    return VariantResult(best_cd, best_value, steps)


def solve_p3(
    x: ComputeDecision,
    s: Scenario,
    samples: SampleSet,
    exhaustive_prefix: bool = False,
) -> CacheChoice:
    """Run the prefix search for both cached data types, keep the better.

    Ties go to caching input data (documented, arbitrary)."""
    input_side = solve_p3_variant(1, x, s, samples, exhaustive_prefix)
    output_side = solve_p3_variant(0, x, s, samples, exhaustive_prefix)
    if input_side.bandwidth_hz <= output_side.bandwidth_hz:
        winner = input_side
    else:
        winner = output_side
    return CacheChoice(
        cache=winner.cache,
        bandwidth_hz=winner.bandwidth_hz,
        variants={1: input_side, 0: output_side},
    )


@dataclass(frozen=True)
class PipelineResult:
    compute: SolveResult
    cache: CacheChoice

    @property
    def bandwidth_hz(self) -> float:
        return self.cache.bandwidth_hz


def optimize_pipeline(
    s: Scenario,
    samples: SampleSet,
    params: SolverParams | None = None,
    exhaustive_prefix: bool = False,
) -> PipelineResult:
    """Full decomposition: solve the compute program, then the cache search."""
    compute = solve_p2(s, samples, params)
    cache = solve_p3(compute.x_star, s, samples, exhaustive_prefix)
    return PipelineResult(compute=compute, cache=cache)
