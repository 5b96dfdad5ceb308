"""Per-state transmission bandwidth under a cache and compute decision.

For one request state every (device, demanded task) pair falls in exactly
one of three groups for the active cached data type:

* the coded multicast group (cached demand matching the compute decision),
* per-task whole-input multicast groups (local compute, input not usable
  from cache),
* per-task whole-output multicast groups (server compute, output not usable
  from cache).

Each group is served at the tightest rate meeting every member's deadline
and billed at the worst member's channel, so the bandwidth of a state is
``sum(rate * worst_inverse_spectral_efficiency)`` over the groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

import numpy as np

from .delivery import CacheDecision, coded_rate, served_devices
from .model import ComputeDecision, RequestState, SampleSet, Scenario, deadline_feasible, state_probability

__all__ = [
    "CaseGroup",
    "CaseBreakdown",
    "StateBandwidth",
    "DeadlineError",
    "case_rates",
    "state_bandwidth",
    "average_bandwidth",
    "sampled_state_values",
    "exact_average_bandwidth",
    "breakdown_records",
    "inverse_spectral_efficiency",
    "input_rate_matrix",
    "output_rate",
]

EXACT_ENUM_LIMIT = 300_000   # largest F**K the expectation oracle will walk


class DeadlineError(ValueError):
    """A compute decision demands local compute that cannot meet the slot."""


class CaseGroup(NamedTuple):
    rate: float        # tight multicast rate for the group, bit/s
    chan: float        # worst member's 1/log2(1+SNR)
    members: tuple     # device indices


@dataclass(frozen=True)
class CaseBreakdown:
    """All rate-need and channel terms of one request state."""

    data_type: int
    coded: CaseGroup
    whole_input: dict    # task -> CaseGroup for entire-input multicasts
    whole_output: dict   # task -> CaseGroup for entire-output multicasts

    def value(self) -> float:
        v = self.coded.rate * self.coded.chan
        v += sum(g.rate * g.chan for g in self.whole_input.values())
        v += sum(g.rate * g.chan for g in self.whole_output.values())
        return v


@dataclass(frozen=True)
class StateBandwidth:
    value: float         # Hz
    breakdown: CaseBreakdown


def inverse_spectral_efficiency(s: Scenario) -> np.ndarray:
    """(K,) channel cost terms 1/log2(1+SNR); multicast pays the max."""
    return 1.0 / np.log2(1.0 + s.snr_linear)


def input_rate_matrix(s: Scenario) -> np.ndarray:
    """(K, F) tight rate I/(tau - I*w/g) for shipping an input before local
    compute; zero where the deadline leaves no transmission time."""
    remain = s.slot_seconds - s.input_bits * s.workload[None, :] / s.cpu_freq[:, None]
    with np.errstate(divide="ignore"):
        rate = np.where(remain > 0, s.input_bits / np.where(remain > 0, remain, 1.0), 0.0)
    return rate


def output_rate(s: Scenario) -> float:
    """Tight rate O/tau for shipping a computed output within the slot."""
    return s.output_bits / s.slot_seconds


def _require_binary(x: ComputeDecision) -> np.ndarray:
    if not x.binary:
        raise ValueError("bandwidth evaluation requires a binary compute decision")
    return x.matrix >= 0.5


def _check_deadlines(s: Scenario, xb: np.ndarray, tasks: np.ndarray) -> None:
    feas = deadline_feasible(s)
    for k, f in enumerate(tasks):
        if xb[k, int(f)] and not feas[k, int(f)]:
            raise DeadlineError(
                f"device {k} cannot compute requested task {int(f)} within the slot"
            )


def case_rates(
    s: Scenario, cd: CacheDecision, x: ComputeDecision, q: RequestState
) -> CaseBreakdown:
    """Group one state's requests into the three cases and take each group's
    tight rate (max of member minimum rates) and worst channel term."""
    xb = _require_binary(x)
    tasks = q.task_ids
    _check_deadlines(s, xb, tasks)
    inv = inverse_spectral_efficiency(s)
    in_rate = input_rate_matrix(s)
    out_rate = output_rate(s)

    served = served_devices(cd, x, q)
    b = float(coded_rate(s.num_devices, cd.share_count, len(served)))
    members = tuple(sorted(served))
    if members:
        if cd.data_type == 1:
            rate = b * max(in_rate[k, served[k]] for k in members)
        else:
            rate = b * out_rate
        coded = CaseGroup(rate, max(inv[k] for k in members), members)
    else:
        coded = CaseGroup(0.0, 0.0, ())

    whole_in: dict[int, CaseGroup] = {}
    whole_out: dict[int, CaseGroup] = {}
    for f in range(s.num_tasks):
        req = [k for k in range(s.num_devices) if tasks[k] == f]
        if not req:
            continue
        if cd.data_type == 1:
            g_in = [k for k in req if xb[k, f] and not cd.mask[f]]
            g_out = [k for k in req if not xb[k, f]]
        else:
            g_in = [k for k in req if xb[k, f]]
            g_out = [k for k in req if not xb[k, f] and not cd.mask[f]]
        if g_in:
            whole_in[f] = CaseGroup(
                max(in_rate[k, f] for k in g_in), max(inv[k] for k in g_in), tuple(g_in)
            )
        if g_out:
            whole_out[f] = CaseGroup(out_rate, max(inv[k] for k in g_out), tuple(g_out))
    return CaseBreakdown(cd.data_type, coded, whole_in, whole_out)


def state_bandwidth(
    s: Scenario, cd: CacheDecision, x: ComputeDecision, q: RequestState
) -> StateBandwidth:
    """Bandwidth (Hz) needed to serve one request state."""
    breakdown = case_rates(s, cd, x, q)
    return StateBandwidth(value=breakdown.value(), breakdown=breakdown)


def _masked_max(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # values >= 0 everywhere, so an empty group correctly yields 0
    return np.max(np.where(mask, values, 0.0), axis=-1)


def sampled_state_values(
    s: Scenario, cd: CacheDecision, x: ComputeDecision, demands: np.ndarray
) -> np.ndarray:
    """Vectorized per-sample bandwidths for a (N, K) demand matrix."""
    xb = _require_binary(x)
    K, F = s.num_devices, s.num_tasks
    feas = deadline_feasible(s)
    if np.any(xb & ~feas):
        k, f = map(int, np.argwhere(xb & ~feas)[0])
        raise DeadlineError(f"device {k} cannot compute task {f} within the slot")

    inv = inverse_spectral_efficiency(s)
    in_rate = input_rate_matrix(s)
    out_rate = output_rate(s)
    cols = np.arange(K)[None, :]
    x_req = xb[cols, demands]                    # (N, K)
    c_req = cd.mask.astype(bool)[demands]
    a_req = in_rate[cols, demands]
    inv_b = np.broadcast_to(inv[None, :], demands.shape)

    if cd.data_type == 1:
        coded_m = c_req & x_req
    else:
        coded_m = c_req & ~x_req
    btab = np.array(
        [float(coded_rate(K, cd.share_count, m)) for m in range(K + 1)]
    )
    b = btab[coded_m.sum(axis=1)]
    if cd.data_type == 1:
        rate_coded = b * _masked_max(a_req, coded_m)
    else:
        rate_coded = b * out_rate * coded_m.any(axis=1)
    values = rate_coded * _masked_max(inv_b, coded_m)

    for f in range(F):
        on_f = demands == f
        if cd.data_type == 1:
            g_in = on_f & x_req & ~c_req
            g_out = on_f & ~x_req
        else:
            g_in = on_f & x_req
            g_out = on_f & ~x_req & ~c_req
        values += _masked_max(a_req, g_in) * _masked_max(inv_b, g_in)
        values += out_rate * g_out.any(axis=1) * _masked_max(inv_b, g_out)
    return values


def average_bandwidth(
    s: Scenario, cd: CacheDecision, x: ComputeDecision, samples: SampleSet
) -> float:
    """Mean bandwidth over the sample list (the sampled objective)."""
    return float(np.mean(sampled_state_values(s, cd, x, samples.demands)))


def exact_average_bandwidth(
    s: Scenario, cd: CacheDecision, x: ComputeDecision
) -> float:
    """Exhaustive expectation over all F**K states, weighted by the joint
    request probabilities.  Independent oracle for the sampled mean; only
    viable for small scenarios."""
    n_states = s.num_tasks ** s.num_devices
    if n_states > EXACT_ENUM_LIMIT:
        raise ValueError(f"exact expectation over {n_states} states is out of budget")
    total = 0.0
    for tasks in product(range(s.num_tasks), repeat=s.num_devices):
        q = RequestState.from_tasks(tasks, s.num_tasks)
        total += state_probability(s, q) * state_bandwidth(s, cd, x, q).value
    return total


def breakdown_records(
    s: Scenario, cd: CacheDecision, x: ComputeDecision, samples: SampleSet
) -> list[dict]:
    """Tabular per-state dump: case populations, rate/channel terms, value."""
    records = []
    for n, row in enumerate(samples.demands):
        q = RequestState.from_tasks(row, s.num_tasks)
        br = case_rates(s, cd, x, q)
        records.append(
            {
                "state": n,
                "tasks": tuple(int(f) for f in row),
                "coded_members": len(br.coded.members),
                "coded_rate": br.coded.rate,
                "coded_chan": br.coded.chan,
                "whole_input_groups": len(br.whole_input),
                "whole_input_value": sum(g.rate * g.chan for g in br.whole_input.values()),
                "whole_output_groups": len(br.whole_output),
                "whole_output_value": sum(g.rate * g.chan for g in br.whole_output.values()),
                "value_hz": br.value(),
            }
        )
    return records
