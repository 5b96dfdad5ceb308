"""Domain types and elementary physics of the cache/compute fleet model.

Everything here is an immutable value plus pure functions over it: a
:class:`Scenario` describes the task library, the device fleet and the
channels; a :class:`RequestState` is one joint demand; a :class:`SampleSet`
is a reproducible Monte Carlo draw of demands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Scenario",
    "ScenarioError",
    "RequestState",
    "SampleSet",
    "ComputeDecision",
    "validate_scenario",
    "sample_requests",
    "state_probability",
    "spectral_efficiency",
    "local_compute_time",
    "expected_energy",
    "check_energy_feasible",
    "energy_cost_matrix",
    "deadline_feasible",
    "compute_decision",
    "zero_compute",
    "clamp_infeasible",
]

# Popularity rows must sum to 1 exactly at this tolerance; rows off by up
# to RENORM_TOL are rescaled (file-format round-trip slack), worse is an error.
ROWSUM_TOL = 1e-9
RENORM_TOL = 1e-6


class ScenarioError(ValueError):
    """A scenario invariant is violated; message names the field and value."""


def _frozen(a: np.ndarray, dtype=float) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=dtype))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Scenario:
    """Immutable description of tasks, devices, channels and timing.

    Units: bits for data sizes, seconds for the slot, cycles/bit for
    workloads, cycles/s for CPU speeds, joules for energy budgets, linear
    (not dB) for SNR.
    """

    num_devices: int
    num_tasks: int
    input_bits: float
    output_bits: float
    cache_bits: float
    slot_seconds: float
    energy_coeff: float            # J.s^2/cycle^3 hardware constant
    workload: np.ndarray           # (F,) cycles per input bit
    cpu_freq: np.ndarray           # (K,) cycles per second
    energy_budget: np.ndarray      # (K,) joules per slot in expectation
    popularity: np.ndarray         # (K,F), each row a pmf over tasks
    snr_linear: np.ndarray         # (K,) receive SNR, linear scale
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "workload", _frozen(self.workload))
        object.__setattr__(self, "cpu_freq", _frozen(self.cpu_freq))
        object.__setattr__(self, "energy_budget", _frozen(self.energy_budget))
        object.__setattr__(self, "popularity", _frozen(self.popularity))
        object.__setattr__(self, "snr_linear", _frozen(self.snr_linear))


def validate_scenario(s: Scenario) -> Scenario:
    """Check every scenario invariant, in a fixed order.

    Returns the scenario (with popularity rows renormalized when they are
    within ``RENORM_TOL`` of summing to one).  Raises :class:`ScenarioError`
    naming the first violated field.
    """
    if s.num_devices < 1:
        raise ScenarioError(f"num_devices must be positive, got {s.num_devices}")
    if s.num_tasks < 1:
        raise ScenarioError(f"num_tasks must be positive, got {s.num_tasks}")
    for name in ("input_bits", "output_bits", "cache_bits"):
        v = getattr(s, name)
        if not np.isfinite(v) or v < 0:
            raise ScenarioError(f"{name} must be >= 0, got {v}")
    if not np.isfinite(s.slot_seconds) or s.slot_seconds <= 0:
        raise ScenarioError(f"slot_seconds must be positive, got {s.slot_seconds}")
    if not np.isfinite(s.energy_coeff) or s.energy_coeff < 0:
        raise ScenarioError(f"energy_coeff must be >= 0, got {s.energy_coeff}")

    K, F = s.num_devices, s.num_tasks
    if s.workload.shape != (F,):
        raise ScenarioError(f"workload must have shape ({F},), got {s.workload.shape}")
    if not np.all(s.workload > 0):
        f = int(np.argmin(s.workload > 0))
        raise ScenarioError(f"workload must be positive, got {s.workload[f]} at task {f}")
    if s.cpu_freq.shape != (K,):
        raise ScenarioError(f"cpu_freq must have shape ({K},), got {s.cpu_freq.shape}")
    if not np.all(s.cpu_freq > 0):
        k = int(np.argmin(s.cpu_freq > 0))
        raise ScenarioError(f"cpu_freq must be positive, got {s.cpu_freq[k]} at device {k}")
    if s.energy_budget.shape != (K,):
        raise ScenarioError(f"energy_budget must have shape ({K},), got {s.energy_budget.shape}")
    if s.snr_linear.shape != (K,):
        raise ScenarioError(f"snr_linear must have shape ({K},), got {s.snr_linear.shape}")
    if not np.all(s.snr_linear > 0):
        k = int(np.argmin(s.snr_linear > 0))
        raise ScenarioError(f"snr_linear must be positive, got {s.snr_linear[k]} at device {k}")

    if s.popularity.shape != (K, F):
        raise ScenarioError(f"popularity must have shape ({K}, {F}), got {s.popularity.shape}")
    if not np.all(s.popularity >= 0):
        raise ScenarioError("popularity entries must be >= 0")
    sums = s.popularity.sum(axis=1)
    worst = int(np.argmax(np.abs(sums - 1.0)))
    if abs(sums[worst] - 1.0) > RENORM_TOL:
        raise ScenarioError(
            f"popularity row sum != 1 for device {worst} (sum={sums[worst]!r})"
        )
    if abs(sums[worst] - 1.0) > ROWSUM_TOL:
        p = s.popularity / sums[:, None]
        object.__setattr__(s, "popularity", _frozen(p))
    return s


# ---------------------------------------------------------------------------
# request states and sampling

@dataclass(frozen=True)
class RequestState:
    """One joint demand: a (K, F) one-hot matrix, each device requests one task."""

    demand: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.demand)
        if d.ndim != 2 or not np.all(np.isin(d, (0, 1))) or not np.all(d.sum(axis=1) == 1):
            raise ValueError("demand must be a binary matrix with one-hot rows")
        object.__setattr__(self, "demand", _frozen(d, dtype=np.int64))

    @property
    def task_ids(self) -> np.ndarray:
        """Requested task index per device, shape (K,)."""
        return np.argmax(self.demand, axis=1)

    @classmethod
    def from_tasks(cls, task_ids, num_tasks: int) -> "RequestState":
        ids = np.asarray(task_ids, dtype=np.int64)
        demand = np.zeros((ids.size, num_tasks), dtype=np.int64)
        demand[np.arange(ids.size), ids] = 1
        return cls(demand)


@dataclass(frozen=True)
class SampleSet:
    """An ordered Monte Carlo draw of request states.

    ``demands[n, k]`` is the task requested by device ``k`` in sample ``n``.
    Regenerating with the same scenario and seed reproduces the array
    byte for byte.
    """

    demands: np.ndarray   # (N, K) int64 task indices
    num_tasks: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "demands", _frozen(self.demands, dtype=np.int64))

    def __len__(self) -> int:
        return self.demands.shape[0]

    @property
    def states(self) -> list[RequestState]:
        return [RequestState.from_tasks(row, self.num_tasks) for row in self.demands]

    def to_bytes(self) -> bytes:
        return self.demands.tobytes()


def sample_requests(s: Scenario, n_samples: int, seed: int) -> SampleSet:
    """Draw ``n_samples`` joint demands, device rows independent with the
    scenario's per-device popularity as the marginal."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    u = rng.random((n_samples, s.num_devices))
    demands = np.empty((n_samples, s.num_devices), dtype=np.int64)
    for k in range(s.num_devices):
        edges = np.cumsum(s.popularity[k])
        edges[-1] = 1.0   # guard against cumsum rounding below 1
        demands[:, k] = np.searchsorted(edges, u[:, k], side="right")
    return SampleSet(demands=demands, num_tasks=s.num_tasks, seed=seed)


def state_probability(s: Scenario, q: RequestState) -> float:
    """Probability of the joint demand under independent device requests."""
    tasks = q.task_ids
    return float(np.prod(s.popularity[np.arange(s.num_devices), tasks]))


# ---------------------------------------------------------------------------
# elementary physics

def spectral_efficiency(s: Scenario, k: int) -> float:
    """Bits/s/Hz achievable by device ``k``: log2(1 + SNR)."""
    return math.log2(1.0 + float(s.snr_linear[k]))


def local_compute_time(s: Scenario, k: int, f: int) -> float:
    """Seconds device ``k`` needs to compute task ``f`` from its input."""
    return s.input_bits * float(s.workload[f]) / float(s.cpu_freq[k])


def deadline_feasible(s: Scenario) -> np.ndarray:
    """(K, F) bool mask: slot leaves strictly positive transmission time
    after computing locally.  Pairs outside the mask may never compute."""
    remain = s.slot_seconds - s.input_bits * s.workload[None, :] / s.cpu_freq[:, None]
    return remain > 0.0


def energy_cost_matrix(s: Scenario) -> np.ndarray:
    """(K, F) expected joules that marking (k, f) local adds to device k's
    slot energy: p_kf * alpha * g_k^2 * I * w_f."""
    return (
        s.popularity
        * s.energy_coeff
        * (s.cpu_freq[:, None] ** 2)
        * s.input_bits
        * s.workload[None, :]
    )


def expected_energy(s: Scenario, x, k: int) -> float:
    """Expected per-slot compute energy of device ``k`` under decision ``x``."""
    m = x.matrix if isinstance(x, ComputeDecision) else np.asarray(x, dtype=float)
    return float(energy_cost_matrix(s)[k] @ m[k])


def check_energy_feasible(s: Scenario, x, slack: float = 1e-12) -> bool:
    """Whether every device's expected energy is within its budget."""
    m = x.matrix if isinstance(x, ComputeDecision) else np.asarray(x, dtype=float)
    used = (energy_cost_matrix(s) * m).sum(axis=1)
    cap = s.energy_budget
    return bool(np.all(used <= cap + slack * np.maximum(1.0, np.abs(cap))))


# ---------------------------------------------------------------------------
# compute decisions

@dataclass(frozen=True)
class ComputeDecision:
    """Per-(device, task) local-compute selection.

    ``binary=True`` entries are exactly 0/1; the relaxed variant lives in
    [0, 1].  Either way, deadline-infeasible pairs are pinned to zero.
    """

    matrix: np.ndarray   # (K, F)
    binary: bool

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))


def compute_decision(matrix, s: Scenario, relaxed: bool = False) -> ComputeDecision:
    """Validate a compute matrix against the scenario and freeze it."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (s.num_devices, s.num_tasks):
        raise ValueError(
            f"compute matrix must have shape ({s.num_devices}, {s.num_tasks}), got {m.shape}"
        )
    if relaxed:
        if np.any(m < -0.0) or np.any(m > 1.0):
            raise ValueError("relaxed compute entries must lie in [0, 1]")
    elif not np.all(np.isin(m, (0.0, 1.0))):
        raise ValueError("binary compute entries must be 0 or 1")
    bad = (m > 0.0) & ~deadline_feasible(s)
    if np.any(bad):
        k, f = map(int, np.argwhere(bad)[0])
        raise ValueError(
            f"device {k} cannot compute task {f} within the slot (x[{k},{f}] must be 0)"
        )
    return ComputeDecision(matrix=m, binary=not relaxed)


def zero_compute(s: Scenario) -> ComputeDecision:
    """The all-server decision: every task computed at the MEC server."""
    return ComputeDecision(np.zeros((s.num_devices, s.num_tasks)), binary=True)


def clamp_infeasible(matrix, s: Scenario) -> np.ndarray:
    """Zero out entries whose local compute cannot meet the slot deadline."""
    return np.where(deadline_feasible(s), np.asarray(matrix, dtype=float), 0.0)
