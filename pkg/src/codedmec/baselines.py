"""Benchmark policies and the exhaustive joint optimizer for tiny instances.

The four baselines bracket the proposed pipeline from above (each fixes
part of the decision space the pipeline searches); the brute-force joint
search bounds it from below and is only viable at oracle scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .admm import (
    RateCoefficients,
    SolveResult,
    SolverParams,
    default_coefficients,
    solve_p2,
)
from .bandwidth import (
    average_bandwidth,
    input_rate_matrix,
    inverse_spectral_efficiency,
    output_rate,
)
from .cache_search import solve_p3_variant
from .delivery import CacheDecision, coded_rate, derive_t, no_cache
from .model import (
    ComputeDecision,
    SampleSet,
    Scenario,
    compute_decision,
    deadline_feasible,
    energy_cost_matrix,
    zero_compute,
)

__all__ = [
    "SizeGuardError",
    "BruteForceResult",
    "baseline_traditional",
    "baseline_local_coded_cache",
    "baseline_local_computing",
    "baseline_uncoded_cache_computing",
    "uncoded_average_bandwidth",
    "brute_force_joint",
]

BRUTE_FORCE_MAX_CELLS = 12   # K*F bound for the exhaustive joint search
BRUTE_FORCE_MAX_TASKS = 6


class SizeGuardError(ValueError):
    """The instance exceeds the brute-force enumeration budget."""


def baseline_traditional(s: Scenario, samples: SampleSet) -> float:
    """Every output multicast whole: no caching, no device computing."""
    return average_bandwidth(s, no_cache(s), zero_compute(s), samples)


def baseline_local_coded_cache(s: Scenario, samples: SampleSet) -> float:
    """Cache capability only: all compute stays on the server, the output
    data is coded-cached by the prefix search."""
    return solve_p3_variant(0, zero_compute(s), s, samples).bandwidth_hz


def baseline_local_computing(
    s: Scenario,
    samples: SampleSet,
    params: SolverParams | None = None,
    solve_result: SolveResult | None = None,
) -> float:
    """Compute capability only: the consensus solve with an empty cache."""
    res = solve_result if solve_result is not None else solve_p2(s, samples, params)
    return res.objective_hz


def uncoded_average_bandwidth(
    s: Scenario,
    cached_tasks,
    data_type: int,
    x: ComputeDecision,
    samples: SampleSet,
) -> float:
    """Sampled bandwidth when whole copies of ``cached_tasks`` sit in every
    device.  A request is free when the cache matches how it is served
    (input cached and computed locally, or output cached and left remote);
    everything else ships whole per task, grouped at the worst channel."""
    if not x.binary:
        raise ValueError("uncoded evaluation requires a binary compute decision")
    xb = x.matrix >= 0.5
    demands = samples.demands
    cols = np.arange(s.num_devices)[None, :]
    cached = np.zeros(s.num_tasks, dtype=bool)
    cached[list(cached_tasks)] = True

    x_req = xb[cols, demands]
    cached_req = cached[demands]
    inv = np.broadcast_to(inverse_spectral_efficiency(s)[None, :], demands.shape)
    a_req = input_rate_matrix(s)[cols, demands]
    out = output_rate(s)

    want = x_req if data_type == 1 else ~x_req
    free = cached_req & want
    values = np.zeros(samples.demands.shape[0])
    for f in range(s.num_tasks):
        on_f = demands == f
        g_in = on_f & x_req & ~free
        g_out = on_f & ~x_req & ~free
        values += np.max(np.where(g_in, a_req, 0.0), axis=1) * np.max(
            np.where(g_in, inv, 0.0), axis=1
        )
        values += (out * g_out.any(axis=1)) * np.max(np.where(g_out, inv, 0.0), axis=1)
    return float(np.mean(values))


def baseline_uncoded_cache_computing(
    s: Scenario, samples: SampleSet, params: SolverParams | None = None
) -> float:
    """Whole-file caching at every device: greedily cache the most sampled
    tasks until the capacity is spent, re-solve the compute program with the
    cached transmissions free, keep the better data type."""
    demands = samples.demands
    counts = np.array([np.sum(demands == f) for f in range(s.num_tasks)])
    order = sorted(range(s.num_tasks), key=lambda f: (-counts[f], f))
    best = np.inf
    for data_type in (1, 0):
        size = s.input_bits if data_type == 1 else s.output_bits
        if size == 0:
            n_fit = s.num_tasks
        else:
            n_fit = min(s.num_tasks, int(s.cache_bits // size))
        cached = tuple(sorted(order[:n_fit]))

        co = default_coefficients(s)
        if cached:
            cache_idx = np.array(cached)
            if data_type == 1:
                co.input_rate[:, cache_idx] = 0.0
                co.input_chan[:, cache_idx] = 0.0
            else:
                co.output_rate[:, cache_idx] = 0.0
                co.output_chan[:, cache_idx] = 0.0

        def score(decision: ComputeDecision, cached=cached, dt=data_type) -> float:
            return uncoded_average_bandwidth(s, cached, dt, decision, samples)

        res = solve_p2(s, samples, params, coefficients=co, objective_fn=score)
        best = min(best, res.objective_hz)
    return float(best)


# ---------------------------------------------------------------------------
# exhaustive joint search

@dataclass(frozen=True)
class BruteForceResult:
    cache: CacheDecision
    x: ComputeDecision
    bandwidth_hz: float
    evaluations: int


def _feasible_rows(s: Scenario) -> list:
    """Per device, every binary task row meeting deadline and energy."""
    feas = deadline_feasible(s)
    cost = energy_cost_matrix(s)
    rows = []
    for k in range(s.num_devices):
        keep = []
        for bits in product((0, 1), repeat=s.num_tasks):
            r = np.array(bits, dtype=float)
            if np.any(r * ~feas[k]):
                continue
            if float(cost[k] @ r) > float(s.energy_budget[k]) * (1 + 1e-12) + 1e-15:
                continue
            keep.append(r)
        rows.append(keep)
    return rows


def _batch_values(
    s: Scenario, cd: CacheDecision, xs: np.ndarray, demands: np.ndarray
) -> np.ndarray:
    """Mean sampled bandwidth for a batch of compute matrices (B, K, F)."""
    K = s.num_devices
    cols = np.arange(K)[None, :]
    inv = np.broadcast_to(inverse_spectral_efficiency(s)[None, :], demands.shape)
    a_req = input_rate_matrix(s)[cols, demands]
    out = output_rate(s)
    c_req = cd.mask.astype(bool)[demands]

    xb = xs.astype(bool)
    x_req = xb[:, cols, demands]                                  # (B, N, K)
    if cd.data_type == 1:
        coded_m = c_req[None] & x_req
    else:
        coded_m = c_req[None] & ~x_req
    btab = np.array([float(coded_rate(K, cd.share_count, m)) for m in range(K + 1)])
    b = btab[coded_m.sum(axis=2)]
    if cd.data_type == 1:
        rate_coded = b * np.max(np.where(coded_m, a_req[None], 0.0), axis=2)
    else:
        rate_coded = b * out * coded_m.any(axis=2)
    values = rate_coded * np.max(np.where(coded_m, inv[None], 0.0), axis=2)

    for f in range(s.num_tasks):
        on_f = demands == f
        if cd.data_type == 1:
            g_in = on_f[None] & x_req & ~c_req[None]
            g_out = on_f[None] & ~x_req
        else:
            g_in = on_f[None] & x_req
            g_out = on_f[None] & ~x_req & ~c_req[None]
        values += np.max(np.where(g_in, a_req[None], 0.0), axis=2) * np.max(
            np.where(g_in, inv[None], 0.0), axis=2
        )
        values += (out * g_out.any(axis=2)) * np.max(np.where(g_out, inv[None], 0.0), axis=2)
    return values.mean(axis=1)


def brute_force_joint(s: Scenario, samples: SampleSet) -> BruteForceResult:
    """Global minimum of the sampled objective over every cache mask, data
    type and feasible binary compute matrix.  Size-guarded."""
    if s.num_devices * s.num_tasks > BRUTE_FORCE_MAX_CELLS or s.num_tasks > BRUTE_FORCE_MAX_TASKS:
        raise SizeGuardError(
            f"brute force limited to K*F <= {BRUTE_FORCE_MAX_CELLS} and "
            f"F <= {BRUTE_FORCE_MAX_TASKS}, got K={s.num_devices}, F={s.num_tasks}"
        )
    rows = _feasible_rows(s)
    xs = np.array(
        [np.stack(combo) for combo in product(*rows)], dtype=float
    )   # (B, K, F)
    demands = samples.demands

    best = None
    evaluations = 0
    for data_type in (1, 0):
        for bits in product((0, 1), repeat=s.num_tasks):
            cd = derive_t(np.array(bits, dtype=np.int64), data_type, s)
            values = _batch_values(s, cd, xs, demands)
            evaluations += values.size
            i = int(np.argmin(values))
            if best is None or values[i] < best[0]:
                best = (float(values[i]), cd, xs[i])
    value, cd, x = best
    return BruteForceResult(
        cache=cd,
        x=compute_decision(x, s),
        bandwidth_hz=value,
        evaluations=evaluations,
    )
