"""Primal simplex for  max c.x  s.t.  A x <= b, x >= 0  with b >= 0.

The slack basis is feasible, so no phase one is needed.  The basis is kept
in product form over the *tight* rows: if Bs are the basic structural
columns and T the rows whose slack is nonbasic, then |Bs| = |T| and the
basic solution solves A[T, Bs] x_Bs = b[T].  Only this square block is
ever factorized, which keeps the mechanism LPs (many incentive rows, few
columns) cheap in memory.

Entering columns are chosen by largest reduced cost.  After a run of
degenerate pivots the method switches to Bland's rule (lowest eligible
index, structural columns before slacks) until the objective moves again,
which rules out cycling.  The ratio test is Harris's two-pass rule: rows
may overshoot by FEAS_TOL, and among the rows blocking within that band the
largest pivot leaves.  A basis block that turns numerically singular ends
the run, and the caller retries with the next perturbation.
"""
from __future__ import annotations

from dataclasses import dataclass

import warnings

import numpy as np
import scipy.linalg

from .errors import LpNumericalFailure

PIVOT_TOL = 1e-9
COST_TOL = 1e-12
PIVOT_REL = 1e-3
RATIO_TIE = 1e-12
STALL_LIMIT = 50
FEAS_TOL = 1e-9
PIVOT_NOISE = 1e-7
SINGULAR_TOL = 1e-13


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    duals: np.ndarray
    iterations: int


PERTURB_LADDER = (1e-7, 1e-10, 0.0)


def solve_max(c, A, b, max_iter: int = 200000, trace=None) -> LpResult:
    """Optimal basic solution, retrying with smaller perturbations.

    A perturbed run can end on a basis that is infeasible at the true
    right-hand side when the data are badly scaled; the next, smaller
    perturbation is tried then.  The unperturbed run is the last resort.
    """
    err = None
    for perturb in PERTURB_LADDER:
        try:
            return _solve(c, A, b, max_iter, perturb, trace)
        except LpNumericalFailure as exc:
            err = exc
    raise err


def _solve(c, A, b, max_iter: int, perturb: float, trace=None) -> LpResult:
    """One simplex run.

    With ``perturb > 0`` the right-hand side is first shifted by a fixed
    pseudo-random amount in [perturb, 2*perturb] per row, which breaks the
    heavy degeneracy of incentive constraints; the final basis is then
    re-evaluated at the true right-hand side.  Reduced costs do not depend
    on b, so that basis stays optimal whenever it is still feasible.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b_true = np.asarray(b, dtype=float)
    m, n = A.shape
    if np.any(b_true < 0):
        raise LpNumericalFailure("right-hand side must be nonnegative")
    b = b_true
    if perturb > 0:
        b = b_true + perturb * (1.0 + np.random.default_rng(0).random(m))
    Bs: list[int] = []
    T: list[int] = []
    tight = np.zeros(m, dtype=bool)
    x_B = np.zeros(0)
    y_T = np.zeros(0)
    stall = 0

    for it in range(max_iter):
        k = len(Bs)
        if k:
            lu = _factor(A[np.ix_(T, Bs)])
            x_B = scipy.linalg.lu_solve(lu, b[T], check_finite=False)
            y_T = scipy.linalg.lu_solve(lu, c[Bs], trans=1, check_finite=False)
        else:
            lu = None
            x_B = np.zeros(0)
            y_T = np.zeros(0)
        x_B = np.maximum(x_B, 0.0)

        # pricing: structural columns first, then slacks of tight rows
        d = c - (y_T @ A[T] if k else 0.0)
        d[Bs] = 0.0
        slack_cost = -y_T
        cand = np.flatnonzero(d > COST_TOL)
        scand = np.flatnonzero(slack_cost > COST_TOL)
        if cand.size == 0 and scand.size == 0:
            break
        bland = stall >= STALL_LIMIT
        if bland:
            # lowest index: structural columns, then slacks by row
            use_col = cand.size > 0
            if use_col:
                enter_col = int(cand[0])
            else:
                pos = min(scand, key=lambda p: T[p])
        else:
            # steepest reduced cost over both kinds of columns
            dc = d[cand].max() if cand.size else -np.inf
            ds = slack_cost[scand].max() if scand.size else -np.inf
            use_col = dc >= ds
            if use_col:
                enter_col = int(cand[np.argmax(d[cand])])
            else:
                pos = int(scand[np.argmax(slack_cost[scand])])
        enter_row = -1
        if use_col:
            a_T = A[T, enter_col]
            a_L = A[:, enter_col]
        else:
            enter_col = -1
            enter_row = T[pos]
            a_T = np.zeros(k)
            a_T[pos] = 1.0
            a_L = np.zeros(m)

        w = scipy.linalg.lu_solve(lu, a_T, check_finite=False) if k else np.zeros(0)
        # change of every row activity per unit step (tight rows stay put)
        g = a_L - (A[:, Bs] @ w if k else 0.0)
        g[tight] = 0.0
        slack = b - (A[:, Bs] @ x_B if k else 0.0)
        slack = np.maximum(slack, 0.0)

        # ratio test (Harris): allow rows to overshoot by FEAS_TOL, then take the
        # largest pivot among the rows that block within that band
        cands = []
        for pos in np.flatnonzero(w > PIVOT_TOL):
            cands.append((x_B[pos], w[pos], Bs[pos], ("col", int(pos))))
        for r in np.flatnonzero(g > PIVOT_TOL):
            cands.append((slack[r], g[r], n + int(r), ("row", int(r))))
        leave = None
        if cands:
            pivs = np.array([cd[1] for cd in cands])
            # drop pivots that are noise next to the largest entry of the column
            keep = pivs >= PIVOT_NOISE * pivs.max()
            cands = [cd for cd, kp in zip(cands, keep) if kp]
            vals = np.array([cd[0] for cd in cands])
            pivs = pivs[keep]
            band = float(((vals + FEAS_TOL) / pivs).min())
            ok = np.flatnonzero(vals / pivs <= band)
            big = pivs[ok].max()
            ok = [int(q) for q in ok if pivs[q] >= PIVOT_REL * big] if bland else \
                [int(q) for q in ok if pivs[q] >= big * (1 - 1e-12)]
            pick = min(ok, key=lambda q: cands[q][2])
            leave = cands[pick][3]
            best = float(vals[pick] / pivs[pick])
            stall = stall + 1 if best <= RATIO_TIE else 0
        if leave is None:
            raise LpNumericalFailure("objective unbounded along an improving direction")

        if trace is not None:
            trace.append((float(c[Bs] @ x_B) if k else 0.0, enter_col, enter_row, leave, best,
                          tuple(sorted(Bs)), tuple(sorted(T))))
        _pivot(Bs, T, tight, enter_col, enter_row, leave)
    else:
        raise LpNumericalFailure(f"no convergence after {max_iter} pivots")

    if perturb > 0:
        it += _dual_cleanup(c, A, b_true, Bs, T, tight, max_iter)
    x = np.zeros(n)
    y = np.zeros(m)
    if Bs:
        M = A[np.ix_(T, Bs)]
        x[Bs] = np.maximum(np.linalg.solve(M, b_true[T]), 0.0)
        y[T] = np.linalg.solve(M.T, c[Bs])
    b = b_true
    resid = A @ x - b
    if resid.max(initial=0.0) > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        raise LpNumericalFailure(f"basic solution violates a row by {resid.max():.3g}")
    return LpResult(x=x, objective=float(c @ x), duals=y, iterations=it)


def _factor(M):
    """LU of a basis block; a numerically singular block ends the run."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(M, check_finite=False)
    diag = np.abs(np.diag(lu[0]))
    if not np.all(np.isfinite(lu[0])) or diag.min() <= SINGULAR_TOL * diag.max():
        raise LpNumericalFailure("basis became numerically singular")
    return lu


def _pivot(Bs, T, tight, enter_col, enter_row, leave) -> None:
    """Swap one variable into the basis.  ``enter_row`` names an entering slack."""
    if enter_col >= 0:
        if leave[0] == "col":
            Bs[leave[1]] = enter_col
        else:
            Bs.append(enter_col)
            T.append(leave[1])
            tight[leave[1]] = True
    else:
        pos = T.index(enter_row)
        if leave[0] == "col":
            Bs.pop(leave[1])
            T.pop(pos)
            tight[enter_row] = False
        else:
            T[pos] = leave[1]
            tight[enter_row] = False
            tight[leave[1]] = True


def _dual_cleanup(c, A, b, Bs, T, tight, max_iter: int) -> int:
    """Dual simplex pivots at the true right-hand side.

    The basis left by the perturbed run is dual feasible (its reduced costs
    do not involve b) but may be slightly primal infeasible at b.  Each
    pivot removes the most negative basic variable while keeping every
    reduced cost of the right sign, so the loop ends on an optimal basis.
    """
    m, n = A.shape
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    for it in range(max_iter):
        k = len(Bs)
        if k:
            lu = _factor(A[np.ix_(T, Bs)])
            x_B = scipy.linalg.lu_solve(lu, b[T], check_finite=False)
            y_T = scipy.linalg.lu_solve(lu, c[Bs], trans=1, check_finite=False)
            slack = b - A[:, Bs] @ x_B
        else:
            x_B, y_T, slack = np.zeros(0), np.zeros(0), b.copy()
        slack[tight] = 0.0
        worst_col = int(np.argmin(x_B)) if k else -1
        worst_row = int(np.argmin(slack))
        vc = x_B[worst_col] if k else 0.0
        vr = slack[worst_row]
        if min(vc, vr) >= -1e-12 * scale:
            return it
        # tableau row of the leaving variable, as a change per unit of each nonbasic
        if vc <= vr:
            u = np.zeros(k)
            u[worst_col] = 1.0
            u = scipy.linalg.lu_solve(lu, u, trans=1, check_finite=False)
            col_rate = u @ A[T]            # x_leave falls by this per unit of x_j
            slack_rate = u                 # ... and by this per unit of slack T[q]
            leave = ("col", worst_col)
            col_gain, slack_gain = -col_rate, -slack_rate
        else:
            r = worst_row
            v = scipy.linalg.lu_solve(lu, A[r, Bs], trans=1, check_finite=False) if k else np.zeros(0)
            col_gain = -(A[r] - (v @ A[T] if k else 0.0))
            slack_gain = v
            leave = ("row", r)
        d = c - (y_T @ A[T] if k else 0.0)
        col_ok = col_gain > PIVOT_TOL
        col_ok[Bs] = False
        slack_ok = slack_gain > PIVOT_TOL
        best, pick = np.inf, None
        for j in np.flatnonzero(col_ok):
            ratio = max(-d[j], 0.0) / col_gain[j]
            if ratio < best - RATIO_TIE:
                best, pick = ratio, (j, -1)
        for q in np.flatnonzero(slack_ok):
            ratio = max(y_T[q], 0.0) / slack_gain[q]
            if ratio < best - RATIO_TIE:
                best, pick = ratio, (-1, T[q])
        if pick is None:
            raise LpNumericalFailure("no feasible point at the true right-hand side")
        _pivot(Bs, T, tight, pick[0], pick[1], leave)
    raise LpNumericalFailure(f"dual cleanup did not finish in {max_iter} pivots")
