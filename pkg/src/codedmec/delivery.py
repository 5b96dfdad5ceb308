"""Coded cache placement, XOR multicast delivery and the multicast rate.

Subfiles are symbolic labels ``(task, group)`` rather than byte payloads:
delivery correctness is a statement about the XOR algebra of labels, so the
whole layer works in exact arithmetic (:class:`fractions.Fraction` for sizes
and rates) and only the bandwidth layer converts to floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Mapping, NamedTuple

import numpy as np

from .model import ComputeDecision, RequestState, Scenario

__all__ = [
    "CacheDecision",
    "Placement",
    "Subfile",
    "CodedMessage",
    "DeliveryError",
    "derive_t",
    "place",
    "build_messages",
    "decode",
    "coded_rate",
    "coded_rate_oracle",
    "count_served",
    "served_devices",
    "format_delivery_trace",
]

ORACLE_MAX_DEVICES = 12   # enumeration budget for the subset-counting oracle


class DeliveryError(RuntimeError):
    """A coded message could not be decoded (impossible for valid inputs)."""


class Subfile(NamedTuple):
    task: int
    group: frozenset


@dataclass(frozen=True)
class CodedMessage:
    """One multicast transmission: XOR of one subfile per served member."""

    subset: frozenset      # t+1 devices addressed
    payload: frozenset     # Subfile labels XOR-ed together
    bits: Fraction


@dataclass(frozen=True)
class CacheDecision:
    """Which tasks are coded-cached, of which data type, at which split.

    ``share_count`` is the number of devices holding each subfile; it is
    derived, never set directly (see :func:`derive_t`).  A decision whose
    derived split is zero carries an empty mask: "cached but unsplittable"
    states never reach the bandwidth layer.
    """

    mask: np.ndarray       # (F,) 0/1 per task
    data_type: int         # 1 = input data cached, 0 = output data cached
    share_count: int       # devices per subfile, in [0, K]
    num_cached: int        # population of mask
    data_bits: float       # bits of the cached object (input or output size)

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.mask, dtype=np.int64))
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)

    @property
    def cached_tasks(self) -> tuple:
        return tuple(int(f) for f in np.flatnonzero(self.mask))


def derive_t(c, d: int, s: Scenario) -> CacheDecision:
    """Derive the placement split for a raw cache mask.

    Applies the floor rule t = floor(C*K / (N*size)), the t>K clamp (whole
    files cached) and the t=0 reset (mask cleared: nothing fits).
    Exact rational arithmetic, so the floor never suffers float rounding.
    """
    mask = np.asarray(c, dtype=np.int64)
    if mask.shape != (s.num_tasks,):
        raise ValueError(f"cache mask must have shape ({s.num_tasks},), got {mask.shape}")
    if not np.all(np.isin(mask, (0, 1))):
        raise ValueError("cache mask entries must be 0 or 1")
    if d not in (0, 1):
        raise ValueError(f"data type bit must be 0 or 1, got {d}")
    size = s.input_bits if d == 1 else s.output_bits
    n = int(mask.sum())
    if n == 0:
        return CacheDecision(mask, d, 0, 0, size)
    if size == 0:
        t = s.num_devices        # zero-size objects cache whole for free
    else:
        t = int(Fraction(s.cache_bits) * s.num_devices // (n * Fraction(size)))
        t = min(t, s.num_devices)
    if t == 0:
        return CacheDecision(np.zeros_like(mask), d, 0, 0, size)
    return CacheDecision(mask, d, t, n, size)


def no_cache(s: Scenario, d: int = 0) -> CacheDecision:
    """The empty cache decision."""
    return derive_t(np.zeros(s.num_tasks, dtype=np.int64), d, s)


@dataclass(frozen=True)
class Placement:
    """Subfile assignment produced by the cache phase.

    Each cached task is split into C(K, t) equal disjoint subfiles, one per
    t-subset of devices; device k stores exactly the subfiles whose group
    contains k.
    """

    num_devices: int
    share_count: int
    data_type: int
    cached_tasks: tuple
    subfile_bits: Fraction
    device_subfiles: tuple   # per device, frozenset of Subfile labels

    @property
    def groups(self) -> tuple:
        return tuple(
            frozenset(g)
            for g in combinations(range(self.num_devices), self.share_count)
        )

    @property
    def per_device_bits(self) -> Fraction:
        per_task = comb(self.num_devices - 1, self.share_count - 1) if self.share_count else 0
        return len(self.cached_tasks) * per_task * self.subfile_bits


def place(cd: CacheDecision, s: Scenario) -> Placement:
    """Assign subfiles to devices for a derived cache decision."""
    k_all = range(s.num_devices)
    if cd.share_count == 0 or cd.num_cached == 0:
        empty = tuple(frozenset() for _ in k_all)
        return Placement(s.num_devices, 0, cd.data_type, (), Fraction(0), empty)
    t = cd.share_count
    subfile_bits = Fraction(cd.data_bits) / comb(s.num_devices, t)
    groups = [frozenset(g) for g in combinations(k_all, t)]
    per_device = tuple(
        frozenset(
            Subfile(f, g) for f in cd.cached_tasks for g in groups if k in g
        )
        for k in k_all
    )
    return Placement(s.num_devices, t, cd.data_type, cd.cached_tasks, subfile_bits, per_device)


def build_messages(
    cd: CacheDecision, served: Mapping[int, int], num_devices: int
) -> list[CodedMessage]:
    """XOR multicast schedule serving the coded-case devices.

    ``served`` maps each coded-case device to its demanded task.  One message
    is sent per (t+1)-subset of devices that meets the served set; inside a
    subset, each served member contributes the subfile of its own demand
    indexed by the other subset members.
    """
    if not served:
        return []
    if cd.share_count < 1:
        raise ValueError("build_messages requires a derived split of at least 1")
    for m, f in served.items():
        if not cd.mask[f]:
            raise ValueError(f"device {m} demands task {f} which is not coded-cached")
    t = cd.share_count
    subfile_bits = Fraction(cd.data_bits) / comb(num_devices, t)
    members = set(served)
    messages = []
    for subset in combinations(range(num_devices), t + 1):
        hit = members.intersection(subset)
        if not hit:
            continue
        payload = frozenset(
            Subfile(served[m], frozenset(subset) - {m}) for m in hit
        )
        messages.append(
            CodedMessage(subset=frozenset(subset), payload=payload, bits=subfile_bits)
        )
    return messages


def decode(
    k: int, placement: Placement, messages: list[CodedMessage], demand: int
) -> set:
    """Recover every subfile of ``demand`` at device ``k`` by XOR peeling.

    For each message addressed to k, all terms except k's own are subfiles
    of other members' demands indexed by groups containing k, hence sit in
    k's cache and cancel.  Returns the complete label set of the demanded
    task; raises :class:`DeliveryError` if any message cannot be cancelled
    or the reconstruction is incomplete.
    """
    cache = placement.device_subfiles[k]
    recovered = {sf for sf in cache if sf.task == demand}
    for msg in messages:
        if k not in msg.subset:
            continue
        unknown = [sf for sf in msg.payload if sf not in cache]
        if not unknown:
            continue
        if len(unknown) > 1:
            raise DeliveryError(
                f"device {k} cannot cancel message {sorted(msg.subset)}: "
                f"{len(unknown)} unknown subfiles"
            )
        recovered.add(unknown[0])
    expected = {
        Subfile(demand, frozenset(g))
        for g in combinations(range(placement.num_devices), placement.share_count)
    }
    if recovered != expected:
        missing = sorted(
            (sf.task, tuple(sorted(sf.group))) for sf in expected - recovered
        )
        raise DeliveryError(f"device {k} is missing subfiles {missing}")
    return recovered


def coded_rate(num_devices: int, share_count: int, num_served: int) -> Fraction:
    """Coded multicast size for one request state, in units of one file.

    Zero when the whole library is cached (split equals the fleet) or nobody
    is served; the closed form otherwise.
    """
    K, t, m = num_devices, share_count, num_served
    if not 0 <= t <= K:
        raise ValueError(f"share count must lie in [0, {K}], got {t}")
    if not 0 <= m <= K:
        raise ValueError(f"served count must lie in [0, {K}], got {m}")
    if t == K or m == 0:
        return Fraction(0)
    if m >= K - t:
        return Fraction(K - t, 1 + t)
    return Fraction(sum(comb(K - i, t) for i in range(1, m + 1)), comb(K, t))


def coded_rate_oracle(num_devices: int, share_count: int, num_served: int) -> Fraction:
    """Brute-force rate: count (t+1)-subsets meeting a fixed served set.

    Independent of :func:`coded_rate`; must agree with it exactly as a
    rational number for every argument triple.
    """
    K, t, m = num_devices, share_count, num_served
    if K > ORACLE_MAX_DEVICES:
        raise ValueError(f"oracle enumeration limited to {ORACLE_MAX_DEVICES} devices")
    if not 0 <= t <= K or not 0 <= m <= K:
        raise ValueError("arguments out of range")
    served = set(range(m))
    count = sum(
        1 for subset in combinations(range(K), t + 1) if served.intersection(subset)
    )
    return Fraction(count, comb(K, t))


def served_devices(
    cd: CacheDecision, x: ComputeDecision, q: RequestState
) -> dict[int, int]:
    """Devices served by the coded multicast in state ``q``, with demands.

    Input caching serves devices that compute their cached demand locally;
    output caching serves devices whose cached demand stays on the server.
    """
    tasks = q.task_ids
    out: dict[int, int] = {}
    for k, f in enumerate(tasks):
        f = int(f)
        active = x.matrix[k, f] >= 0.5
        if cd.mask[f] and (active if cd.data_type == 1 else not active):
            out[k] = f
    return out


def count_served(cd: CacheDecision, x: ComputeDecision, q: RequestState) -> int:
    """Population of the coded-case set for one request state."""
    return len(served_devices(cd, x, q))


# ---------------------------------------------------------------------------
# line-oriented delivery trace (golden-file format)

def _task_label(f: int, num_tasks: int) -> str:
    return chr(ord("A") + f) if num_tasks <= 26 else f"T{f}"


def _subfile_label(sf: Subfile, data_type: int, num_tasks: int) -> str:
    kind = "I" if data_type == 1 else "O"
    devs = ",".join(str(k + 1) for k in sorted(sf.group))
    return f"{kind}({_task_label(sf.task, num_tasks)}_{devs})"


def format_delivery_trace(
    s: Scenario, cd: CacheDecision, x: ComputeDecision, q: RequestState
) -> str:
    """Serialize one state's full delivery schedule, one transmission per line.

    Columns are tab-separated: kind, addressed devices (1-based), payload
    labels joined by '^' for coded lines, exact size in bits.
    """
    tasks = q.task_ids
    xb = x.matrix >= 0.5
    lines = []

    served = served_devices(cd, x, q)
    if served and cd.share_count >= 1:
        for msg in build_messages(cd, served, s.num_devices):
            devs = ",".join(str(k + 1) for k in sorted(msg.subset))
            labels = "^".join(
                sorted(_subfile_label(sf, cd.data_type, s.num_tasks) for sf in msg.payload)
            )
            lines.append(f"coded\t{devs}\t{labels}\t{float(msg.bits)}")

    for f in range(s.num_tasks):
        req = [k for k in range(s.num_devices) if tasks[k] == f]
        if not req:
            continue
        if cd.data_type == 1:
            whole_in = [k for k in req if xb[k, f] and not cd.mask[f]]
            whole_out = [k for k in req if not xb[k, f]]
        else:
            whole_in = [k for k in req if xb[k, f]]
            whole_out = [k for k in req if not xb[k, f] and not cd.mask[f]]
        name = _task_label(f, s.num_tasks)
        if whole_in:
            devs = ",".join(str(k + 1) for k in whole_in)
            lines.append(f"input\t{devs}\tI({name})\t{float(s.input_bits)}")
        if whole_out:
            devs = ",".join(str(k + 1) for k in whole_out)
            lines.append(f"output\t{devs}\tO({name})\t{float(s.output_bits)}")
    return "\n".join(lines)
