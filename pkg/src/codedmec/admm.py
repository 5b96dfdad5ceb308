"""Consensus ADMM for the computation decision (no coded cache).

The sampled objective sums, per task and sample, the product of a tight
multicast rate and a worst-channel term for the local-compute group (input
shipping) and the server-compute group (output shipping).  Binary compute
variables are relaxed to a box plus a concave penalty ``beta * x(1-x)``;
per-sample copies of x and of the rate/channel epigraph variables turn the
coupled program into independent small subproblems:

* copies update: one strictly convex QP per (task, sample), solved for all
  of them at once by cyclic dual coordinate ascent over the halfspace
  constraints (Hildreth), warm-started across outer iterations;
* globals update: convex-concave procedure that linearizes the bilinear
  rate*channel terms and the concave binary penalty, leaving per-device
  box-plus-energy projections and closed-form rate/channel updates;
* dual update: plain gradient ascent on the consensus multipliers.

Rates are normalized internally so the largest shipping-rate coefficient
equals ``RATE_REF``; the default penalties (and the binary penalty weight
100) are calibrated against that scale, which makes solver behavior
invariant to the scenario's physical units.  :class:`AdmmState` stores the
normalized values and records the unit.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .bandwidth import (
    average_bandwidth,
    input_rate_matrix,
    inverse_spectral_efficiency,
    output_rate,
)
from .delivery import no_cache
from .model import (
    ComputeDecision,
    SampleSet,
    Scenario,
    compute_decision,
    deadline_feasible,
    energy_cost_matrix,
)

__all__ = [
    "SolverParams",
    "AdmmState",
    "SolveResult",
    "TraceRow",
    "RateCoefficients",
    "EnergyInfeasibleError",
    "solve_p2",
    "update_copies",
    "update_globals",
    "update_duals",
    "lagrangian_value",
    "round_and_repair",
    "format_trace",
    "default_coefficients",
]

# Largest normalized shipping-rate coefficient.  300 is the output-ship rate
# of the reference constants (6 Mbit over a 20 ms slot, in Mbit/s), the scale
# the default penalties below are tuned against.
RATE_REF = 300.0


class EnergyInfeasibleError(ValueError):
    """An energy budget is malformed (negative)."""


@dataclass(frozen=True)
class SolverParams:
    """Tunables of the consensus solver.

    ``None`` penalties resolve at solve time to 10x the largest coefficient
    magnitude in the constraints they enforce.  The stop rule fires on
    ``||x(t+1)-x(t)|| <= stop_tol`` once the binary violation has settled
    below ``settle_tol`` (or unconditionally below ``stall_tol``).
    """

    binary_penalty: float = 100.0
    penalty_consensus: float | None = None     # consensus x = copies
    penalty_rate_local: float | None = None    # input-ship rate epigraph
    penalty_rate_remote: float | None = None   # output-ship rate epigraph
    penalty_chan_local: float | None = None    # local-group channel epigraph
    penalty_chan_remote: float | None = None   # remote-group channel epigraph
    stop_tol: float = 1.0
    settle_tol: float = 1e-4
    stall_tol: float = 1e-8
    max_outer: int = 200
    max_inner: int = 30
    inner_tol: float = 1e-6
    qp_tol: float = 1e-8
    qp_max_cycles: int = 3000
    round_threshold: float = 0.5

    def validated(self) -> "SolverParams":
        if self.binary_penalty < 0:
            raise ValueError("binary_penalty must be >= 0")
        for name in (
            "penalty_consensus",
            "penalty_rate_local",
            "penalty_rate_remote",
            "penalty_chan_local",
            "penalty_chan_remote",
        ):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.round_threshold < 1:
            raise ValueError("round_threshold must lie in (0, 1)")
        for name in ("stop_tol", "settle_tol", "stall_tol", "inner_tol", "qp_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1 or self.qp_max_cycles < 1:
            raise ValueError("iteration caps must be >= 1")
        return self


@dataclass(frozen=True)
class RateCoefficients:
    """Per-(device, task) shipping-rate and channel-cost coefficients, raw
    units.  The uncoded baseline zeroes entries whose transmissions are free."""

    input_rate: np.ndarray    # (K, F) bit/s to ship an input before local compute
    output_rate: np.ndarray   # (K, F) bit/s to ship a computed output
    input_chan: np.ndarray    # (K, F) channel cost if k joins task f's local group
    output_chan: np.ndarray   # (K, F) channel cost if k joins the remote group


def default_coefficients(s: Scenario) -> RateCoefficients:
    inv = inverse_spectral_efficiency(s)
    kf = (s.num_devices, s.num_tasks)
    return RateCoefficients(
        input_rate=input_rate_matrix(s),
        output_rate=np.full(kf, output_rate(s)),
        input_chan=np.broadcast_to(inv[:, None], kf).copy(),
        output_chan=np.broadcast_to(inv[:, None], kf).copy(),
    )


@dataclass
class AdmmState:
    """Every primal, copy and dual variable of the consensus program.

    Rate and channel matrices are per (sample, task); rates are expressed in
    ``rate_unit`` bit/s.  Copies and their multipliers are per (sample,
    device, task).
    """

    x: np.ndarray                # (K, F) relaxed decision in [0, 1]
    copies: np.ndarray           # (N, K, F) per-sample copies of x
    rate_local: np.ndarray       # (N, F)
    rate_remote: np.ndarray      # (N, F)
    chan_local: np.ndarray       # (N, F)
    chan_remote: np.ndarray      # (N, F)
    rate_local_hat: np.ndarray   # (N, F) introduced copies
    rate_remote_hat: np.ndarray
    chan_local_hat: np.ndarray
    chan_remote_hat: np.ndarray
    dual_copies: np.ndarray      # (N, K, F)
    dual_rate_local: np.ndarray  # (N, F)
    dual_rate_remote: np.ndarray
    dual_chan_local: np.ndarray
    dual_chan_remote: np.ndarray
    iteration: int = 0
    rate_unit: float = 1.0

    def consensus_residual(self) -> float:
        return float(np.linalg.norm(self.x[None, :, :] - self.copies))

    def copy_residual(self) -> float:
        sq = 0.0
        for hat, val in (
            (self.rate_local_hat, self.rate_local),
            (self.rate_remote_hat, self.rate_remote),
            (self.chan_local_hat, self.chan_local),
            (self.chan_remote_hat, self.chan_remote),
        ):
            sq += float(np.sum((hat - val) ** 2))
        return float(np.sqrt(sq))

    def binary_violation(self) -> float:
        return float(np.sum(self.x * (1.0 - self.x)))


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lagrangian: float
    consensus_residual: float
    copy_residual: float
    step_norm: float
    binary_violation: float
    candidate_hz: float


def format_trace(rows: list[TraceRow]) -> str:
    """Tabular serialization of a solve trace (CSV with a header)."""
    out = io.StringIO()
    out.write(
        "iteration,lagrangian,consensus_residual,copy_residual,"
        "step_norm,binary_violation,candidate_hz\n"
    )
    for r in rows:
        out.write(
            f"{r.iteration},{r.lagrangian!r},{r.consensus_residual!r},"
            f"{r.copy_residual!r},{r.step_norm!r},{r.binary_violation!r},"
            f"{r.candidate_hz!r}\n"
        )
    return out.getvalue()


@dataclass(frozen=True)
class SolveResult:
    x_star: ComputeDecision      # binary, energy-feasible
    objective_hz: float          # sampled no-cache bandwidth of x_star
    x_relaxed: np.ndarray        # final relaxed iterate
    state: AdmmState             # final solver state
    trace: list[TraceRow]
    exit_reason: str             # converged | stalled | max_outer
    iterations: int
    selected_iteration: int      # iteration whose rounded candidate is returned
    converged: bool
    rate_unit: float


# ---------------------------------------------------------------------------
# problem data

class _Problem:
    """Preprocessed, normalized problem data shared by all updates."""

    def __init__(
        self,
        scenario: Scenario,
        samples: SampleSet,
        params: SolverParams,
        coefficients: RateCoefficients | None = None,
    ):
        params = params.validated()
        self.scenario = scenario
        self.params = params
        self.demands = samples.demands
        self.n_samples, self.num_devices = self.demands.shape
        self.num_tasks = scenario.num_tasks
        co = coefficients or default_coefficients(scenario)

        self.feasible = deadline_feasible(scenario)
        self.ub = self.feasible.astype(float)
        cap = max(
            float(np.max(co.input_rate, initial=0.0)),
            float(np.max(co.output_rate, initial=0.0)),
        )
        self.rate_unit = cap / RATE_REF if cap > 0 else 1.0
        self.in_rate = co.input_rate / self.rate_unit      # (K, F), <= RATE_REF
        self.out_rate = co.output_rate / self.rate_unit
        self.in_chan = np.asarray(co.input_chan, dtype=float)
        self.out_chan = np.asarray(co.output_chan, dtype=float)

        rows = np.arange(self.n_samples)
        cols = np.arange(self.num_devices)[None, :]
        self.rows = rows
        D = self.demands
        self.a_n = self.in_rate[cols, D]        # (N, K) gathered at each demand
        self.b_n = self.out_rate[cols, D]
        self.cin_n = self.in_chan[cols, D]
        self.cout_n = self.out_chan[cols, D]
        self.ub_n = self.ub[cols, D]

        tiny = 1e-12
        self.rho0 = params.penalty_consensus or 10.0
        self.rho1 = params.penalty_rate_local or 10.0 * max(self.a_n.max(), tiny)
        self.rho2 = params.penalty_rate_remote or 10.0 * max(self.b_n.max(), tiny)
        self.rho3 = params.penalty_chan_local or 10.0 * max(self.cin_n.max(), tiny)
        self.rho4 = params.penalty_chan_remote or 10.0 * max(self.cout_n.max(), tiny)

        self.energy_cost = energy_cost_matrix(scenario)    # (K, F) joules
        self.energy_cap = scenario.energy_budget

    # -- state construction -------------------------------------------------

    def initial_state(self) -> AdmmState:
        K, F, N = self.num_devices, self.num_tasks, self.n_samples
        x0 = 0.5 * self.ub
        for k in range(K):
            x0[k] = _box_budget_project(
                x0[k], self.ub[k], self.energy_cost[k], float(self.energy_cap[k])
            )
        rl, rr, cl, cr = self.tight_terms(x0)
        zero_nf = lambda: np.zeros((N, F))
        return AdmmState(
            x=x0,
            copies=np.tile(x0, (N, 1, 1)),
            rate_local=rl,
            rate_remote=rr,
            chan_local=cl,
            chan_remote=cr,
            rate_local_hat=rl.copy(),
            rate_remote_hat=rr.copy(),
            chan_local_hat=cl.copy(),
            chan_remote_hat=cr.copy(),
            dual_copies=np.zeros((N, K, F)),
            dual_rate_local=zero_nf(),
            dual_rate_remote=zero_nf(),
            dual_chan_local=zero_nf(),
            dual_chan_remote=zero_nf(),
            iteration=0,
            rate_unit=self.rate_unit,
        )

    def tight_terms(self, x: np.ndarray):
        """Rate/channel matrices taken with equality at decision ``x``."""
        N, F = self.n_samples, self.num_tasks
        xg = x[np.arange(self.num_devices)[None, :], self.demands]   # (N, K)
        rl = np.zeros((N, F))
        rr = np.zeros((N, F))
        cl = np.zeros((N, F))
        cr = np.zeros((N, F))
        for k in range(self.num_devices):
            idx = (self.rows, self.demands[:, k])
            np.maximum.at(rl, idx, self.a_n[:, k] * xg[:, k])
            np.maximum.at(rr, idx, self.b_n[:, k] * (1.0 - xg[:, k]))
            np.maximum.at(cl, idx, self.cin_n[:, k] * xg[:, k])
            np.maximum.at(cr, idx, self.cout_n[:, k] * (1.0 - xg[:, k]))
        return rl, rr, cl, cr

    def objective_value(self, state: AdmmState) -> float:
        """Normalized sampled objective plus the binary penalty."""
        rate_part = (
            np.sum(state.rate_local * state.chan_local)
            + np.sum(state.rate_remote * state.chan_remote)
        ) / self.n_samples
        return float(
            rate_part
            + self.params.binary_penalty * np.sum(state.x * (1.0 - state.x))
        )

    # -- copies update (per-(task, sample) QPs via Hildreth) ----------------

    def new_workspace(self) -> dict:
        N, K, F = self.n_samples, self.num_devices, self.num_tasks
        nk = lambda: np.zeros((N, K))
        nf = lambda: np.zeros((N, F))
        return {
            "in_rate": nk(), "out_rate": nk(), "in_chan": nk(), "out_chan": nk(),
            "y_lo": nk(), "y_hi": nk(),
            "h1": nf(), "h2": nf(), "h3": nf(), "h4": nf(),
        }

    def solve_copies(self, state: AdmmState, work: dict | None = None):
        """Minimize the penalty terms over the copies under the epigraph
        halfspaces; returns (copies, four hat matrices, workspace)."""
        p = self.params
        rows, D = self.rows, self.demands
        cols = np.arange(self.num_devices)[None, :]
        if work is None:
            work = self.new_workspace()

        w = state.x[cols, D] + _gather_nkf(state.dual_copies, D)    # (N, K)
        t1 = state.rate_local - state.dual_rate_local               # (N, F)
        t2 = state.rate_remote - state.dual_rate_remote
        t3 = state.chan_local - state.dual_chan_local
        t4 = state.chan_remote - state.dual_chan_remote

        yc = w.copy()
        h1, h2, h3, h4 = t1.copy(), t2.copy(), t3.copy(), t4.copy()
        r0, r1, r2, r3, r4 = self.rho0, self.rho1, self.rho2, self.rho3, self.rho4
        a, b, ci, co, ub = self.a_n, self.b_n, self.cin_n, self.cout_n, self.ub_n

        tol = p.qp_tol * max(1.0, RATE_REF)
        d_in = a * a / r0 + 1.0 / r1
        d_out = b * b / r0 + 1.0 / r2
        d_ci = ci * ci / r0 + 1.0 / r3
        d_co = co * co / r0 + 1.0 / r4

        for _ in range(p.qp_max_cycles):
            before = (yc.copy(), h1.copy(), h2.copy(), h3.copy(), h4.copy())
            for k in range(self.num_devices):
                idx = (rows, D[:, k])
                ak, bk, cik, cok = a[:, k], b[:, k], ci[:, k], co[:, k]

                # input-ship rate epigraph: a*y <= rate_local_hat
                s = work["in_rate"][:, k]
                vy = yc[:, k] + s * ak / r0
                vh = h1[idx] - s / r1
                delta = np.maximum(ak * vy - vh, 0.0) / d_in[:, k]
                yc[:, k] = vy - delta * ak / r0
                h1[idx] = vh + delta / r1
                work["in_rate"][:, k] = delta

                # output-ship rate epigraph: b*(1-y) <= rate_remote_hat
                s = work["out_rate"][:, k]
                vy = yc[:, k] - s * bk / r0
                vh = h2[idx] - s / r2
                delta = np.maximum(bk * (1.0 - vy) - vh, 0.0) / d_out[:, k]
                yc[:, k] = vy + delta * bk / r0
                h2[idx] = vh + delta / r2
                work["out_rate"][:, k] = delta

                # local-group channel epigraph: c*y <= chan_local_hat
                s = work["in_chan"][:, k]
                vy = yc[:, k] + s * cik / r0
                vh = h3[idx] - s / r3
                delta = np.maximum(cik * vy - vh, 0.0) / d_ci[:, k]
                yc[:, k] = vy - delta * cik / r0
                h3[idx] = vh + delta / r3
                work["in_chan"][:, k] = delta

                # remote-group channel epigraph: c*(1-y) <= chan_remote_hat
                s = work["out_chan"][:, k]
                vy = yc[:, k] - s * cok / r0
                vh = h4[idx] - s / r4
                delta = np.maximum(cok * (1.0 - vy) - vh, 0.0) / d_co[:, k]
                yc[:, k] = vy + delta * cok / r0
                h4[idx] = vh + delta / r4
                work["out_chan"][:, k] = delta

            # box on the copies
            v = yc - work["y_lo"] / r0
            yc = np.maximum(v, 0.0)
            work["y_lo"] = r0 * (yc - v)
            v = yc + work["y_hi"] / r0
            yc = np.minimum(v, ub)
            work["y_hi"] = r0 * (v - yc)
            # nonnegativity of the hats
            for name, h, rho in (("h1", h1, r1), ("h2", h2, r2), ("h3", h3, r3), ("h4", h4, r4)):
                v = h - work[name] / rho
                h[:] = np.maximum(v, 0.0)
                work[name] = rho * (h - v)

            move = max(
                float(np.max(np.abs(yc - before[0]))),
                float(np.max(np.abs(h1 - before[1]))),
                float(np.max(np.abs(h2 - before[2]))),
                float(np.max(np.abs(h3 - before[3]))),
                float(np.max(np.abs(h4 - before[4]))),
            )
            if move <= tol and self._copies_violation(yc, h1, h2, h3, h4) <= tol:
                break
        else:
            raise RuntimeError(
                "copies update did not reach the QP tolerance within "
                f"{p.qp_max_cycles} cycles"
            )

        # exact primal feasibility: clip the copies, lift the hats
        yc = np.clip(yc, 0.0, ub)
        for k in range(self.num_devices):
            idx = (rows, D[:, k])
            np.maximum.at(h1, idx, a[:, k] * yc[:, k])
            np.maximum.at(h2, idx, b[:, k] * (1.0 - yc[:, k]))
            np.maximum.at(h3, idx, ci[:, k] * yc[:, k])
            np.maximum.at(h4, idx, co[:, k] * (1.0 - yc[:, k]))
        np.maximum(h1, 0.0, out=h1)
        np.maximum(h2, 0.0, out=h2)
        np.maximum(h3, 0.0, out=h3)
        np.maximum(h4, 0.0, out=h4)

        copies = np.clip(
            state.x[None, :, :] + state.dual_copies, 0.0, self.ub[None, :, :]
        )
        _scatter_nkf(copies, D, yc)
        return copies, h1, h2, h3, h4, work

    def _copies_violation(self, yc, h1, h2, h3, h4) -> float:
        rows, D = self.rows, self.demands
        worst = 0.0
        for k in range(self.num_devices):
            idx = (rows, D[:, k])
            worst = max(
                worst,
                float(np.max(self.a_n[:, k] * yc[:, k] - h1[idx], initial=0.0)),
                float(np.max(self.b_n[:, k] * (1.0 - yc[:, k]) - h2[idx], initial=0.0)),
                float(np.max(self.cin_n[:, k] * yc[:, k] - h3[idx], initial=0.0)),
                float(np.max(self.cout_n[:, k] * (1.0 - yc[:, k]) - h4[idx], initial=0.0)),
            )
        worst = max(
            worst,
            float(np.max(-yc, initial=0.0)),
            float(np.max(yc - self.ub_n, initial=0.0)),
            float(max(0.0, -min(h.min() for h in (h1, h2, h3, h4)))),
        )
        return worst

    # -- globals update (convex-concave procedure) ---------------------------

    def solve_globals(self, state: AdmmState):
        """Minimize over (x, rate/channel terms) with the bilinear products
        and the concave binary penalty replaced by tangents at the current
        inner iterate; repeats until the surrogate value settles."""
        p = self.params
        N = self.n_samples
        beta = p.binary_penalty
        y, lam = state.copies, state.dual_copies
        center = np.mean(y - lam, axis=0)                    # (K, F)
        center_const = 0.5 * self.rho0 * (
            float(np.sum((y - lam) ** 2)) - N * float(np.sum(center**2))
        )
        t1 = state.rate_local_hat + state.dual_rate_local    # (N, F)
        t2 = state.rate_remote_hat + state.dual_rate_remote
        t3 = state.chan_local_hat + state.dual_chan_local
        t4 = state.chan_remote_hat + state.dual_chan_remote

        x_i = state.x.copy()
        rl_i, rr_i = state.rate_local.copy(), state.rate_remote.copy()
        cl_i, cr_i = state.chan_local.copy(), state.chan_remote.copy()

        def surrogate(x, rl, rr, cl, cr):
            lin = (
                np.sum(rl_i * cl + rl * cl_i - rl_i * cl_i)
                + np.sum(rr_i * cr + rr * cr_i - rr_i * cr_i)
            ) / N
            pen = beta * float(np.sum(x - 2.0 * x_i * x + x_i * x_i))
            cons = 0.5 * self.rho0 * N * float(np.sum((x - center) ** 2)) + center_const
            quad = (
                0.5 * self.rho1 * np.sum((t1 - rl) ** 2)
                + 0.5 * self.rho2 * np.sum((t2 - rr) ** 2)
                + 0.5 * self.rho3 * np.sum((t3 - cl) ** 2)
                + 0.5 * self.rho4 * np.sum((t4 - cr) ** 2)
            )
            return float(lin + pen + cons + quad)

        inner_log = []
        prev_val = None
        for _ in range(p.max_inner):
            before = surrogate(x_i, rl_i, rr_i, cl_i, cr_i)
            v = center - beta * (1.0 - 2.0 * x_i) / (self.rho0 * N)
            x_new = np.empty_like(x_i)
            for k in range(self.num_devices):
                x_new[k] = _box_budget_project(
                    v[k], self.ub[k], self.energy_cost[k], float(self.energy_cap[k])
                )
            rl_new = np.maximum(t1 - cl_i / (N * self.rho1), 0.0)
            cl_new = np.maximum(t3 - rl_i / (N * self.rho3), 0.0)
            rr_new = np.maximum(t2 - cr_i / (N * self.rho2), 0.0)
            cr_new = np.maximum(t4 - rr_i / (N * self.rho4), 0.0)
            after = surrogate(x_new, rl_new, rr_new, cl_new, cr_new)
            inner_log.append((before, after))
            x_i, rl_i, rr_i, cl_i, cr_i = x_new, rl_new, rr_new, cl_new, cr_new
            if prev_val is not None and abs(after - prev_val) <= p.inner_tol * max(
                1.0, abs(after)
            ):
                break
            prev_val = after
        return x_i, rl_i, rr_i, cl_i, cr_i, inner_log

    # -- dual update ----------------------------------------------------------

    def ascend_duals(self, state: AdmmState) -> AdmmState:
        return replace(
            state,
            dual_copies=state.dual_copies + (state.x[None, :, :] - state.copies),
            dual_rate_local=state.dual_rate_local
            + (state.rate_local_hat - state.rate_local),
            dual_rate_remote=state.dual_rate_remote
            + (state.rate_remote_hat - state.rate_remote),
            dual_chan_local=state.dual_chan_local
            + (state.chan_local_hat - state.chan_local),
            dual_chan_remote=state.dual_chan_remote
            + (state.chan_remote_hat - state.chan_remote),
        )

    def lagrangian(self, state: AdmmState) -> float:
        val = self.objective_value(state)
        val += 0.5 * self.rho0 * float(
            np.sum((state.x[None, :, :] - state.copies + state.dual_copies) ** 2)
        )
        for hat, prim, dual, rho in (
            (state.rate_local_hat, state.rate_local, state.dual_rate_local, self.rho1),
            (state.rate_remote_hat, state.rate_remote, state.dual_rate_remote, self.rho2),
            (state.chan_local_hat, state.chan_local, state.dual_chan_local, self.rho3),
            (state.chan_remote_hat, state.chan_remote, state.dual_chan_remote, self.rho4),
        ):
            val += 0.5 * rho * float(np.sum((hat - prim + dual) ** 2))
        return val


def _gather_nkf(arr: np.ndarray, demands: np.ndarray) -> np.ndarray:
    """arr is (N, K, F); pick entry (n, k, demands[n, k]) -> (N, K)."""
    n, k = demands.shape
    return arr[np.arange(n)[:, None], np.arange(k)[None, :], demands]


def _scatter_nkf(arr: np.ndarray, demands: np.ndarray, values: np.ndarray) -> None:
    n, k = demands.shape
    arr[np.arange(n)[:, None], np.arange(k)[None, :], demands] = values


def _box_budget_project(v, ub, cost, budget: float) -> np.ndarray:
    """Euclidean projection onto {0 <= x <= ub, cost@x <= budget}, cost >= 0.

    Exact: walks the breakpoints of the piecewise-linear budget usage in the
    scalar multiplier.
    """
    v = np.asarray(v, dtype=float)
    x = np.clip(v, 0.0, ub)
    used = float(cost @ x)
    if used <= budget:
        return x
    pos = cost > 0
    # breakpoints where a coordinate enters/leaves its bounds as theta grows
    theta_hi = v[pos] / cost[pos]                       # hits lower bound 0
    theta_lo = (v[pos] - ub[pos]) / cost[pos]           # leaves upper bound
    points = np.unique(np.concatenate([[0.0], theta_lo, theta_hi]))
    points = points[points >= 0.0]
    lo = 0.0
    for pt in points:
        if float(cost @ np.clip(v - pt * cost, 0.0, ub)) <= budget:
            hi = pt
            break
        lo = pt
    else:
        # budget only reachable in the final segment
        hi = float(points[-1]) + 1.0
        while float(cost @ np.clip(v - hi * cost, 0.0, ub)) > budget:
            hi *= 2.0
    # inside (lo, hi] the clip pattern of every positive-cost coordinate is
    # fixed; solve the linear equation for theta on that segment
    mid = 0.5 * (lo + hi)
    trial = v - mid * cost
    free = pos & (trial > 0.0) & (trial < ub)
    fixed_used = float(cost @ np.clip(np.where(free, 0.0, v - mid * cost), 0.0, ub))
    denom = float(np.sum(cost[free] ** 2))
    if denom == 0.0:
        theta = hi
    else:
        theta = (float(cost[free] @ v[free]) + fixed_used - budget) / denom
        theta = min(max(theta, lo), hi)
    x = np.clip(v - theta * cost, 0.0, ub)
    # guard against boundary rounding
    if float(cost @ x) > budget * (1.0 + 1e-12) + 1e-15:
        x = np.clip(v - hi * cost, 0.0, ub)
    return x


# ---------------------------------------------------------------------------
# public operations over AdmmState

def update_copies(
    state: AdmmState,
    s: Scenario,
    samples: SampleSet,
    params: SolverParams | None = None,
    coefficients: RateCoefficients | None = None,
) -> AdmmState:
    """Refresh the per-sample copies and the introduced rate/channel copies."""
    prob = _Problem(s, samples, params or SolverParams(), coefficients)
    copies, h1, h2, h3, h4, _ = prob.solve_copies(state)
    return replace(
        state,
        copies=copies,
        rate_local_hat=h1,
        rate_remote_hat=h2,
        chan_local_hat=h3,
        chan_remote_hat=h4,
    )


def update_globals(
    state: AdmmState,
    s: Scenario,
    samples: SampleSet,
    params: SolverParams | None = None,
    coefficients: RateCoefficients | None = None,
):
    """Refresh the global decision and rate/channel terms (CCCP).

    Returns the updated state and the inner log of surrogate value pairs
    (before, after) per inner step.
    """
    prob = _Problem(s, samples, params or SolverParams(), coefficients)
    x, rl, rr, cl, cr, inner = prob.solve_globals(state)
    new = replace(
        state, x=x, rate_local=rl, rate_remote=rr, chan_local=cl, chan_remote=cr
    )
    return new, inner


def update_duals(state: AdmmState) -> AdmmState:
    """Gradient ascent on every multiplier from the current residuals."""
    lam = state.dual_copies + (state.x[None, :, :] - state.copies)
    return replace(
        state,
        dual_copies=lam,
        dual_rate_local=state.dual_rate_local + (state.rate_local_hat - state.rate_local),
        dual_rate_remote=state.dual_rate_remote + (state.rate_remote_hat - state.rate_remote),
        dual_chan_local=state.dual_chan_local + (state.chan_local_hat - state.chan_local),
        dual_chan_remote=state.dual_chan_remote + (state.chan_remote_hat - state.chan_remote),
    )


def lagrangian_value(
    state: AdmmState,
    s: Scenario,
    samples: SampleSet,
    params: SolverParams | None = None,
    coefficients: RateCoefficients | None = None,
) -> float:
    """Augmented Lagrangian at the state (normalized rate units)."""
    prob = _Problem(s, samples, params or SolverParams(), coefficients)
    return prob.lagrangian(state)


def round_and_repair(
    x_relaxed, s: Scenario, threshold: float = 0.5
) -> ComputeDecision:
    """Threshold the relaxed decision and restore energy feasibility.

    Over-budget devices drop active entries in ascending order of estimated
    bandwidth saving per joule (ties by task index), so the cheapest-to-lose
    work leaves first.
    """
    x = np.asarray(
        x_relaxed.matrix if isinstance(x_relaxed, ComputeDecision) else x_relaxed,
        dtype=float,
    )
    xb = (x >= threshold) & deadline_feasible(s)
    cost = energy_cost_matrix(s)
    inv = inverse_spectral_efficiency(s)
    saving = s.popularity * inv[:, None] * (output_rate(s) - input_rate_matrix(s))
    with np.errstate(divide="ignore", invalid="ignore"):
        per_joule = np.where(cost > 0, saving / np.where(cost > 0, cost, 1.0), np.inf)
    for k in range(s.num_devices):
        order = np.lexsort((np.arange(s.num_tasks), per_joule[k]))
        used = float(cost[k] @ xb[k])
        cap = float(s.energy_budget[k])
        for f in order:
            if used <= cap:
                break
            if xb[k, f] and cost[k, f] > 0:
                xb[k, f] = False
                used -= cost[k, f]
    return compute_decision(xb.astype(float), s)


def solve_p2(
    s: Scenario,
    samples: SampleSet,
    params: SolverParams | None = None,
    coefficients: RateCoefficients | None = None,
    objective_fn=None,
) -> SolveResult:
    """Run the full consensus solve and return a binary, energy-feasible
    decision (the best rounded iterate seen, by the sampled objective).

    ``objective_fn(decision) -> Hz`` scores rounded candidates; it defaults
    to the no-cache sampled bandwidth.
    """
    params = (params or SolverParams()).validated()
    if np.any(s.energy_budget < 0):
        k = int(np.argmin(s.energy_budget))
        raise EnergyInfeasibleError(
            f"energy_budget must be >= 0, got {s.energy_budget[k]} at device {k}"
        )
    if objective_fn is None:
        empty = no_cache(s)

        def objective_fn(decision: ComputeDecision) -> float:
            return average_bandwidth(s, empty, decision, samples)

    prob = _Problem(s, samples, params, coefficients)
    state = prob.initial_state()
    work = prob.new_workspace()
    trace: list[TraceRow] = []
    best = None   # (objective, iteration, decision)
    exit_reason = "max_outer"

    for t in range(1, params.max_outer + 1):
        x_prev = state.x
        copies, h1, h2, h3, h4, work = prob.solve_copies(state, work)
        state = replace(
            state,
            copies=copies,
            rate_local_hat=h1,
            rate_remote_hat=h2,
            chan_local_hat=h3,
            chan_remote_hat=h4,
        )
        x, rl, rr, cl, cr, _ = prob.solve_globals(state)
        state = replace(
            state, x=x, rate_local=rl, rate_remote=rr, chan_local=cl, chan_remote=cr
        )
        state = prob.ascend_duals(state)
        state.iteration = t

        step = float(np.linalg.norm(state.x - x_prev))
        candidate = round_and_repair(state.x, s, params.round_threshold)
        cand_hz = float(objective_fn(candidate))
        trace.append(
            TraceRow(
                iteration=t,
                lagrangian=prob.lagrangian(state),
                consensus_residual=state.consensus_residual(),
                copy_residual=state.copy_residual(),
                step_norm=step,
                binary_violation=state.binary_violation(),
                candidate_hz=cand_hz,
            )
        )
        if best is None or cand_hz < best[0]:
            best = (cand_hz, t, candidate)

        if step <= params.stall_tol:
            exit_reason = "stalled"
            break
        if step <= params.stop_tol and state.binary_violation() <= params.settle_tol:
            exit_reason = "converged"
            break

    obj, it, decision = best
    return SolveResult(
        x_star=decision,
        objective_hz=obj,
        x_relaxed=state.x.copy(),
        state=state,
        trace=trace,
        exit_reason=exit_reason,
        iterations=len(trace),
        selected_iteration=it,
        converged=exit_reason == "converged",
        rate_unit=prob.rate_unit,
    )
