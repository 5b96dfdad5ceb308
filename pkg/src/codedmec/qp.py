"""Small dense convex quadratic programs with box bounds and inequality rows.

Primal active-set method: repeatedly solve the equality-constrained KKT
system on the working set, step to the blocking constraint, and drop rows
with negative multipliers.  Built for the solver's few-variable subproblems
(tens of variables, tens of rows); deterministic tie-breaking throughout.
"""

from __future__ import annotations

import numpy as np

__all__ = ["QpError", "qp_solve"]


class QpError(RuntimeError):
    """The active-set iteration limit was exceeded."""


def _stack_constraints(n, lower, upper, G, h):
    """All inequalities as rows a@u <= b; box rows first, then general rows."""
    rows, rhs = [], []
    if lower is not None:
        lower = np.asarray(lower, dtype=float)
        for i in range(n):
            if np.isfinite(lower[i]):
                e = np.zeros(n)
                e[i] = -1.0
                rows.append(e)
                rhs.append(-lower[i])
    if upper is not None:
        upper = np.asarray(upper, dtype=float)
        for i in range(n):
            if np.isfinite(upper[i]):
                e = np.zeros(n)
                e[i] = 1.0
                rows.append(e)
                rhs.append(upper[i])
    if G is not None:
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.atleast_1d(np.asarray(h, dtype=float))
        for i in range(G.shape[0]):
            rows.append(G[i])
            rhs.append(h[i])
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(rows), np.array(rhs)


def _feasible_start(A, b, x0, lower, upper, tol):
    """Cheap feasibility restoration: clip to the box, then cyclically
    project onto violated rows.  Adequate for the well-posed subproblems
    this solver serves."""
    x = x0.copy()
    if lower is not None:
        x = np.maximum(x, np.where(np.isfinite(lower), lower, -np.inf))
    if upper is not None:
        x = np.minimum(x, np.where(np.isfinite(upper), upper, np.inf))
    if A.shape[0] == 0:
        return x
    for _ in range(200 * max(1, A.shape[0])):
        viol = A @ x - b
        worst = int(np.argmax(viol))
        if viol[worst] <= tol:
            return x
        a = A[worst]
        x = x - a * (viol[worst] / (a @ a))
    raise QpError("could not find a feasible starting point")


def qp_solve(
    Q,
    c,
    lower=None,
    upper=None,
    G=None,
    h=None,
    x0=None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Minimize 0.5*u'Qu + c'u subject to lower <= u <= upper and G u <= h.

    Q must be convex (positive definite in practice).  Returns the
    minimizer; raises :class:`QpError` if the iteration cap is hit.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    A, b = _stack_constraints(n, lower, upper, G, h)
    m = A.shape[0]
    if max_iter is None:
        max_iter = 50 * (n + m + 1)

    if x0 is None:
        x0 = np.zeros(n)
    x = _feasible_start(A, b, np.asarray(x0, dtype=float), lower, upper, tol)

    scale = max(1.0, np.abs(b).max() if m else 1.0, np.abs(x).max())
    work: list[int] = [i for i in range(m) if A[i] @ x - b[i] > -tol * scale]
    work = _independent_rows(A, work)

    for _ in range(max_iter):
        xs, mult = _solve_eqp(Q, c, A, b, work)
        step = xs - x
        if np.max(np.abs(step)) <= tol * max(1.0, np.abs(x).max()):
            if not work:
                return xs
            j = int(np.argmin(mult))
            if mult[j] >= -tol * max(1.0, np.abs(mult).max()):
                return xs
            work.pop(j)
            x = xs
            continue
        # longest feasible step toward the equality solution
        alpha, blocker = 1.0, -1
        for i in range(m):
            if i in work:
                continue
            denom = A[i] @ step
            if denom > tol * scale:
                room = (b[i] - A[i] @ x) / denom
                if room < alpha - 1e-15:
                    alpha, blocker = max(room, 0.0), i
        x = x + alpha * step
        if blocker >= 0:
            cand = work + [blocker]
            if len(_independent_rows(A, cand)) == len(cand):
                work = cand
            else:
                # degenerate geometry: swap out the weakest multiplier row
                xs2, mult2 = _solve_eqp(Q, c, A, b, work)
                if work:
                    work.pop(int(np.argmin(mult2)))
                work.append(blocker)
                work = _independent_rows(A, work)
    raise QpError(f"active-set did not converge in {max_iter} iterations")


def _independent_rows(A, idx: list[int]) -> list[int]:
    """Greedy prefix of idx whose rows are linearly independent."""
    keep: list[int] = []
    for i in idx:
        trial = A[keep + [i]]
        if np.linalg.matrix_rank(trial) == len(keep) + 1:
            keep.append(i)
    return keep


def _solve_eqp(Q, c, A, b, work: list[int]):
    """Equality-constrained solve on the working set via the KKT system."""
    n = c.size
    if not work:
        try:
            return np.linalg.solve(Q, -c), np.zeros(0)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(Q, -c, rcond=None)[0], np.zeros(0)
    Aw = A[work]
    k = Aw.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = Q
    kkt[:n, n:] = Aw.T
    kkt[n:, :n] = Aw
    rhs = np.concatenate([-c, b[np.array(work)]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n], sol[n:]
