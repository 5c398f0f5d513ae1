"""Pricing revenues: Myerson with ironing, SRev, BRev, the optimal LP, Ronen.

Every routine enumerates the exact joint law.  Posted-price buyers pick
the item with the largest nonnegative utility and buy at indifference.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LpNumericalFailure, LpTooLarge, ValidationError
from .lp import solve_max
from .mrf import JointDistribution, MrfInstance
from .valuation import all_subsets, item_values, set_values, symbol_item_values

TIE_TOL = 1e-12


# ------------------------------------------------------------ one item

@dataclass
class RevenueCurve:
    values: np.ndarray       # sorted distinct values
    probs: np.ndarray        # mass on each value
    quantiles: np.ndarray    # Pr[t >= v]
    in_region: np.ndarray    # price allowed (v >= floor, or > floor if strict)
    ironed: np.ndarray       # hull slope per value, nan outside the region
    price: float             # optimal price in the region (inf if none)
    revenue: float
    floor: float = 0.0
    strict: bool = False

    def virtual_value(self, v: float) -> float:
        k = np.searchsorted(self.values, v)
        if k >= self.values.size or self.values[k] != v:
            raise ValidationError(f"{v} is not a support value", "value")
        return float(self.ironed[k])

    def positive_part_sum(self) -> float:
        """Sum of f(v) * max(ironed(v), 0) over the region."""
        m = self.in_region
        return float(np.sum(self.probs[m] * np.maximum(self.ironed[m], 0.0)))


def _upper_hull(px, py):
    """Vertices of the upper concave hull of points sorted by x (ties by y)."""
    hull: list[int] = []
    for k in range(px.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (px[b] - px[a]) * (py[k] - py[a]) - (py[b] - py[a]) * (px[k] - px[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


def myerson_single(values, probs, floor: float = 0.0, strict: bool = False) -> RevenueCurve:
    """Ironed revenue curve of a discrete distribution, prices restricted to the floor.

    Duplicate values are merged.  Zero-mass values stay as candidate prices.
    ``probs`` need not sum to one (sub-probability measures are allowed).
    """
    values = np.asarray(values, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    vals, inv = np.unique(values, return_inverse=True)
    f = np.bincount(inv, weights=probs, minlength=vals.size)
    q = np.cumsum(f[::-1])[::-1]
    region = vals > floor if strict else vals >= floor
    ironed = np.full(vals.size, np.nan)
    idx = np.flatnonzero(region)
    if idx.size == 0:
        return RevenueCurve(vals, f, q, region, ironed, math.inf, 0.0, floor, strict)

    # points in increasing quantile order: highest value first, origin in front
    order = idx[::-1]
    px = np.concatenate([[0.0], q[order]])
    py = np.concatenate([[0.0], vals[order] * q[order]])
    srt = np.lexsort((py, px))
    px, py = px[srt], py[srt]
    last = np.append(px[1:] != px[:-1], True)  # highest point per quantile
    px, py = px[last], py[last]
    hull = _upper_hull(px, py)
    hx, hy = px[hull], py[hull]

    def H(x):
        return np.interp(x, hx, hy)

    def left_slope(x):
        j = np.searchsorted(hx, x, side="left")
        j = max(j, 1)
        return (hy[j] - hy[j - 1]) / (hx[j] - hx[j - 1])

    upper_q = 0.0
    for k in order:  # walk from the top value down
        lo, hi = upper_q, q[k]
        if hi - lo > 0:
            ironed[k] = (H(hi) - H(lo)) / (hi - lo)
        else:
            ironed[k] = left_slope(hi) if hi > 0 else vals[k]
        upper_q = hi

    rev = vals[idx] * q[idx]
    best = rev.max()
    pick = idx[np.flatnonzero(rev >= best - TIE_TOL * max(1.0, abs(best)))[0]]
    if best <= 0:
        return RevenueCurve(vals, f, q, region, ironed, float(vals[pick]), 0.0, floor, strict)
    return RevenueCurve(vals, f, q, region, ironed, float(vals[pick]), float(best), floor, strict)


def best_restricted_price(values, probs, floor: float, strict: bool):
    """max p * Pr[t >= p] over support values p in the region, by direct scan."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    best, price = 0.0, math.inf
    for p in np.unique(values):
        if p < floor or (strict and p <= floor):
            continue
        r = p * probs[values >= p].sum()
        if r > best + TIE_TOL * max(1.0, best):
            best, price = r, p
    return price, best


# ---------------------------------------------------------------- SRev

@dataclass
class SRevResult:
    prices: np.ndarray
    revenue: float
    method: str           # "additive", "exact" or "heuristic"
    upper_bound: float    # sum over items of single-item Myerson revenue of V_i

    def as_dict(self) -> dict:
        return {"prices": [p if math.isfinite(p) else "inf" for p in self.prices.tolist()],
                "revenue": self.revenue, "method": self.method, "upper_bound": self.upper_bound}


def posted_price_revenue(V: np.ndarray, f: np.ndarray, prices: np.ndarray,
                         tol: float = 1e-9) -> np.ndarray:
    """Revenue of one-item posted prices; ``prices`` may be (n,) or a batch (B, n).

    The buyer takes the item with the largest utility V_i - p_i if it is
    >= 0; among maximizers the highest price is paid (seller-favorable).
    """
    P = np.atleast_2d(np.asarray(prices, dtype=float))
    out = np.empty(P.shape[0])
    chunk = max(1, 4_000_000 // max(1, V.size))
    for s in range(0, P.shape[0], chunk):
        Pc = P[s:s + chunk]
        U = V[None, :, :] - Pc[:, None, :]
        best = U.max(axis=2)
        cand = U >= best[:, :, None] - tol
        paid = np.where(cand, Pc[:, None, :], -np.inf).max(axis=2)
        paid = np.where(best >= -tol, paid, 0.0)
        out[s:s + chunk] = paid @ f
    return out if np.ndim(prices) == 2 else float(out[0])


def posted_price_choice(V: np.ndarray, prices: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Chosen item per type (-1 for no purchase), same rule as the revenue."""
    U = V - prices[None, :]
    best = U.max(axis=1)
    cand = U >= best[:, None] - tol
    pm = np.where(cand, prices[None, :], -np.inf)
    top = pm.max(axis=1)
    choice = np.argmax(cand & (pm >= top[:, None]), axis=1)
    return np.where(best >= -tol, choice, -1)


def _vertex_candidates(V: np.ndarray, f: np.ndarray, limit: int):
    """Price vectors where every finite price is pinned by an indifference.

    Each item is withheld, anchored to a value V_i(t), or tied to another
    item j through a type t: p_i = p_j + V_i(t) - V_j(t).  Only acyclic
    tie structures are kept.  Returns None if the count exceeds ``limit``.
    """
    n = V.shape[1]
    pos = f > 0
    Vp = V[pos]
    anchors = [np.unique(Vp[:, i]) for i in range(n)]
    diffs = {(i, j): np.unique(Vp[:, i] - Vp[:, j]) for i in range(n) for j in range(n) if i != j}
    options = ["inf", "anchor"] + list(range(n))
    total = 0
    plans = []
    for parent in itertools.product(options, repeat=n):
        if any(parent[i] == i for i in range(n)):
            continue
        # acyclic check by following parents
        ok = True
        for i in range(n):
            seen, cur = set(), i
            while isinstance(parent[cur], int):
                if cur in seen:
                    ok = False
                    break
                seen.add(cur)
                cur = parent[cur]
            if not ok:
                break
        if not ok:
            continue
        size = 1
        for i in range(n):
            if parent[i] == "anchor":
                size *= anchors[i].size
            elif isinstance(parent[i], int):
                size *= diffs[(i, parent[i])].size
        total += size
        if total > limit:
            return None
        plans.append(parent)

    batches = []
    for parent in plans:
        # topological order: roots first
        order, placed = [], set()
        while len(order) < n:
            for i in range(n):
                if i in placed:
                    continue
                par = parent[i]
                if not isinstance(par, int) or par in placed:
                    order.append(i)
                    placed.add(i)
        grids = []
        for i in range(n):
            if parent[i] == "inf":
                grids.append(np.array([0.0]))
            elif parent[i] == "anchor":
                grids.append(anchors[i])
            else:
                grids.append(diffs[(i, parent[i])])
        mesh = np.stack([g.ravel() for g in np.meshgrid(*grids, indexing="ij")], axis=1)
        P = np.empty_like(mesh)
        for i in order:
            if parent[i] == "inf":
                P[:, i] = np.inf
            elif parent[i] == "anchor":
                P[:, i] = mesh[:, i]
            else:
                P[:, i] = P[:, parent[i]] + mesh[:, i]
        keep = np.all((P >= 0) | ~np.isfinite(P), axis=1)
        batches.append(P[keep])
    P = np.concatenate(batches, axis=0)
    P = np.unique(np.round(P, 12), axis=0)
    return P


def srev(inst: MrfInstance, dist: JointDistribution, limit: int = 400_000) -> SRevResult:
    n = inst.n
    f = dist.pmf
    upper = 0.0
    V = item_values(inst, dist.type_values())
    for i in range(n):
        upper += myerson_single(V[:, i], f).revenue
    if inst.valuation.kind == "additive":
        prices, total = [], 0.0
        for i in range(n):
            c = myerson_single(inst.symbol_values(i), dist.marginal(i))
            prices.append(c.price)
            total += c.revenue
        return SRevResult(np.array(prices), total, "additive", upper)
    return srev_one_item(V, f, limit, upper)


def srev_one_item(V: np.ndarray, f: np.ndarray, limit: int = 400_000,
                  upper: float | None = None) -> SRevResult:
    n = V.shape[1]
    if upper is None:
        upper = sum(myerson_single(V[:, i], f).revenue for i in range(n))
    P = _vertex_candidates(V, f, limit)
    if P is not None:
        rev = posted_price_revenue(V, f, P)
        k = int(np.argmax(rev))
        return SRevResult(P[k], float(rev[k]), "exact", upper)
    return _srev_heuristic(V, f, upper)


def _srev_heuristic(V, f, upper) -> SRevResult:
    """Best single-item Myerson price, then coordinate ascent over support values."""
    n = V.shape[1]
    best_p, best_r = np.full(n, np.inf), 0.0
    for i in range(n):
        c = myerson_single(V[:, i], f)
        if c.revenue > best_r:
            best_r = c.revenue
            best_p = np.full(n, np.inf)
            best_p[i] = c.price
    grids = [np.append(np.unique(V[f > 0, i]), np.inf) for i in range(n)]
    improved = True
    while improved:
        improved = False
        for i in range(n):
            P = np.repeat(best_p[None], grids[i].size, axis=0)
            P[:, i] = grids[i]
            rev = posted_price_revenue(V, f, P)
            k = int(np.argmax(rev))
            if rev[k] > best_r + 1e-12:
                best_r, best_p = float(rev[k]), P[k].copy()
                improved = True
    return SRevResult(best_p, best_r, "heuristic", upper)


# ---------------------------------------------------------------- BRev

def brev(inst: MrfInstance, dist: JointDistribution):
    """(price, revenue) of the best grand-bundle price."""
    full = tuple(range(inst.n))
    b = set_values(inst, dist.type_values(), [full])[:, 0]
    c = myerson_single(b, dist.pmf)
    return c.price, c.revenue


# ------------------------------------------------------------- Ronen

@dataclass
class RonenResult:
    revenue: float
    prices: list = field(default_factory=list)  # per item: array over contexts (nan if unused)


def context_floor(scores: np.ndarray, i: int):
    """Floor and strictness of item i's favorite region given the others' scores.

    ``scores`` has shape (..., n).  Item i is favorite iff its score is
    >= max of the others, strictly above any earlier item attaining it.
    """
    n = scores.shape[-1]
    if n == 1:
        shape = scores.shape[:-1]
        return np.zeros(shape), np.zeros(shape, dtype=bool)
    others = np.delete(scores, i, axis=-1)
    L = others.max(axis=-1)
    if i == 0:
        strict = np.zeros(L.shape, dtype=bool)
    else:
        strict = (scores[..., :i] >= L[..., None]).any(axis=-1)
    return L, strict


def _context_scores(inst: MrfInstance, dist: JointDistribution, i: int):
    """Scores of all items over the contexts of item i (axis i dropped)."""
    n = inst.n
    sizes = dist.sizes
    rest = [j for j in range(n) if j != i]
    grids = np.meshgrid(*[np.arange(sizes[j]) for j in rest], indexing="ij") if rest else []
    shape = tuple(sizes[j] for j in rest)
    sc = np.zeros(shape + (n,))
    for g, j in zip(grids, rest):
        sc[..., j] = symbol_item_values(inst, j)[g] if inst.valuation.is_xos else inst.symbol_values(j)[g]
    return sc


def ronen_copies(inst: MrfInstance, dist: JointDistribution) -> RonenResult:
    """Lookahead revenue: sum over i and t_-i of f(t_-i) * best restricted price revenue."""
    if inst.valuation.is_xos:
        raise ValidationError("defined for scalar-valued kinds only", "valuation.kind")
    n = inst.n
    total = 0.0
    prices = []
    for i in range(n):
        cond, mass = dist.conditional_table(i)
        c = np.moveaxis(cond, i, -1)
        m = np.moveaxis(mass, i, -1)[..., 0]
        sc = _context_scores(inst, dist, i)
        L, strict = context_floor(sc, i)
        vals = inst.symbol_values(i)
        pr = np.full(m.shape, np.nan)
        for ctx in np.ndindex(m.shape):
            if m[ctx] <= 0:
                continue
            p, r = best_restricted_price(vals, c[ctx], float(L[ctx]), bool(strict[ctx]))
            pr[ctx] = p
            total += m[ctx] * r
        prices.append(pr)
    return RonenResult(total, prices)


# ----------------------------------------------------------- optimal LP

@dataclass
class Mechanism:
    sets: list            # item sets, the empty set first
    alloc: np.ndarray     # (|T|, len(sets)) lottery per type
    payment: np.ndarray   # (|T|,)

    def item_probs(self, n: int) -> np.ndarray:
        pi = np.zeros((self.alloc.shape[0], n))
        for k, S in enumerate(self.sets):
            for i in S:
                pi[:, i] += self.alloc[:, k]
        return pi

    def revenue(self, dist: JointDistribution) -> float:
        return float(dist.pmf @ self.payment)

    def as_dict(self) -> dict:
        return {"sets": [list(S) for S in self.sets], "alloc": self.alloc.tolist(),
                "payment": self.payment.tolist()}

    @classmethod
    def from_dict(cls, doc, n_types: int) -> "Mechanism":
        try:
            sets = [tuple(int(i) for i in S) for S in doc["sets"]]
            alloc = np.asarray(doc["alloc"], dtype=float)
            pay = np.asarray(doc["payment"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed mechanism: {exc}", "mechanism")
        if alloc.shape != (n_types, len(sets)) or pay.shape != (n_types,):
            raise ValidationError(f"expected alloc {n_types}x{len(sets)} and {n_types} payments",
                                  "mechanism")
        if np.any(alloc < -1e-9) or np.any(np.abs(alloc.sum(axis=1) - 1) > 1e-7):
            raise ValidationError("each lottery must be a distribution", "mechanism.alloc")
        return cls(sets, alloc, pay)


def incentive_violations(inst: MrfInstance, dist: JointDistribution, mech: Mechanism):
    """(max IC violation, max IR violation) over all type pairs."""
    W = set_values(inst, dist.type_values(), mech.sets)   # W[t, S] = v(t, S)
    U = W @ mech.alloc.T - mech.payment[None, :]          # U[t, t'] utility of t reporting t'
    truth = np.diag(U)
    ic = float((U - truth[:, None]).max(initial=0.0))
    ir = float((-truth).max(initial=0.0))
    return ic, ir


def lp_shape(n: int, n_types: int):
    k = (1 << n) - 1
    cols = n_types * k + 2 * n_types
    rows = n_types * n_types + n_types
    return rows, cols


def opt_revenue_lp(inst: MrfInstance, dist: JointDistribution,
                   max_items: int = 5, max_types: int = 300, max_entries: int = 40_000_000):
    """Optimal IC/IR revenue over lotteries on item sets, by the internal simplex."""
    n, N = inst.n, dist.size
    rows, cols = lp_shape(n, N)
    if n > max_items or N > max_types or rows * cols > max_entries:
        raise LpTooLarge(f"n={n}, |T|={N}: LP with {rows} rows x {cols} columns exceeds caps "
                         f"(n<={max_items}, |T|<={max_types})")
    sets = [S for S in all_subsets(n) if S]
    k = len(sets)
    W = set_values(inst, dist.type_values(), sets)
    scale = float(W.max()) if W.size and W.max() > 0 else 1.0
    Ws = W / scale
    f = dist.pmf

    sig = lambda t: t * k            # first sigma column of type t
    pp = N * k                       # p+ columns start
    pm = N * k + N                   # p- columns start
    A = np.zeros((N * N + N, cols))
    b = np.zeros(N * N + N)
    t_idx, s_idx = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    r = (t_idx * N + s_idx).ravel()   # row for (true t, report s); t == s rows become IR
    tt, ss = t_idx.ravel(), s_idx.ravel()
    offd = tt != ss
    # IC: sum_S sigma(s) W(t,S) - p(s) - sum_S sigma(t) W(t,S) + p(t) <= 0
    for S in range(k):
        np.add.at(A, (r[offd], ss[offd] * k + S), Ws[tt[offd], S])
        np.add.at(A, (r[offd], tt[offd] * k + S), -Ws[tt[offd], S])
    np.add.at(A, (r[offd], pp + ss[offd]), -1.0)
    np.add.at(A, (r[offd], pm + ss[offd]), 1.0)
    np.add.at(A, (r[offd], pp + tt[offd]), 1.0)
    np.add.at(A, (r[offd], pm + tt[offd]), -1.0)
    # IR on the diagonal rows: p(t) - sum_S sigma(t) W(t,S) <= 0
    diag = np.arange(N) * N + np.arange(N)
    for S in range(k):
        A[diag, np.arange(N) * k + S] = -Ws[:, S]
    A[diag, pp + np.arange(N)] = 1.0
    A[diag, pm + np.arange(N)] = -1.0
    # lotteries
    lot = N * N + np.arange(N)
    for S in range(k):
        A[lot, np.arange(N) * k + S] = 1.0
    b[lot] = 1.0
    c = np.zeros(cols)
    c[pp:pp + N] = f
    c[pm:pm + N] = -f

    res = solve_max(c, A, b)
    x = res.x
    alloc = x[:N * k].reshape(N, k)
    alloc = np.clip(alloc, 0.0, 1.0)
    empty = np.clip(1.0 - alloc.sum(axis=1), 0.0, 1.0)
    mech = Mechanism([()] + sets, np.column_stack([empty, alloc]),
                     (x[pp:pp + N] - x[pm:pm + N]) * scale)
    revenue = res.objective * scale
    if abs(mech.revenue(dist) - revenue) > 1e-9 * max(1.0, abs(revenue)):
        raise LpNumericalFailure("reported revenue does not match the payments")
    ic, ir = incentive_violations(inst, dist, mech)
    if max(ic, ir) > 1e-7 * max(1.0, scale):
        raise LpNumericalFailure(f"solution violates IC/IR by {max(ic, ir):.3g}")
    return mech, float(revenue)
