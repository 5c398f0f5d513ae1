"""Duality benchmark terms, prophet thresholds, and the theorem checks.

Two decompositions are computed for every instance:

* the constrained-additive one (scalar kinds), where the favorite item is
  the smallest index maximizing t_i and the cutoff is ``r``;
* the XOS one (every kind, scalar values read as one-clause vectors),
  where the favorite maximizes V_i, C(t) = {i : V_i < 2r} and r is the
  one-item posted-price revenue.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import concentration as conc
from .errors import LpTooLarge, StateSpaceTooLarge
from .mrf import (JointDistribution, MrfInstance, conditional_bound_check,
                  dependence_report)
from .report import VerificationReport, close, geq, leq, vacuous
from .revenue import (Mechanism, best_restricted_price, brev, context_floor,
                      myerson_single, opt_revenue_lp, ronen_copies, srev,
                      srev_one_item, _context_scores)
from .spectral import d_dobrushin, glauber_chain, verify_gap_inequality
from .valuation import (all_subsets, at_most, best_feasible_subsets, favorite, item_values,
                        region_scores, set_mask, set_values, value_on_masks)


@dataclass
class BenchmarkTerms:
    family: str            # "constrained_additive" or "xos"
    r: float
    single: float
    non_favorite: float
    tail: float
    core: float

    @property
    def bound(self) -> float:
        if self.family == "xos":
            return 2 * self.single + 4 * self.tail + 4 * self.core
        return self.single + self.tail + self.core

    @property
    def duality_bound(self) -> float:
        """Single and Non-Favorite before Non-Favorite is split."""
        if self.family == "xos":
            return 2 * self.single + 4 * self.non_favorite
        return self.single + self.non_favorite

    def as_dict(self) -> dict:
        return {"family": self.family, "r": self.r, "single": self.single,
                "non_favorite": self.non_favorite, "tail": self.tail, "core": self.core,
                "bound": self.bound}


# ------------------------------------------------------------ Single

def ironed_context_values(inst: MrfInstance, dist: JointDistribution, scores_of_item,
                          xos: bool = False):
    """Conditional ironed virtual values restricted to each item's favorite region.

    ``scores_of_item(i)`` gives the per-symbol score of item i (t_i or V_i).
    Returns (phi, positive_sum, ronen_gap): phi has shape (|T|, n) with the
    value for type t and item i when t is in R_i (nan otherwise);
    positive_sum is sum_i sum_ctx f(ctx) sum_region f(.|ctx) phi^+;
    ronen_gap is the worst |sum_region f phi^+ - best restricted price revenue|.
    """
    n = inst.n
    N = dist.size
    phi = np.full((N, n), np.nan)
    sup = dist.support
    total_pos = 0.0
    worst = 0.0
    for i in range(n):
        cond, mass = dist.conditional_table(i)
        c = np.moveaxis(cond, i, -1)
        m = np.moveaxis(mass, i, -1)[..., 0]
        sc = _context_scores(inst, dist, i) if not xos else _xos_context_scores(inst, dist, i)
        L, strict = context_floor(sc, i)
        own = scores_of_item(i)
        rest_axes = [j for j in range(n) if j != i]
        # flat positions of each context's column, ordered by item i's symbol
        for ctx in np.ndindex(m.shape):
            if m[ctx] <= 0:
                continue
            curve = myerson_single(own, c[ctx], float(L[ctx]), bool(strict[ctx]))
            full = np.zeros(n, dtype=np.int64)
            for ax, j in enumerate(rest_axes):
                full[j] = ctx[ax]
            sizes_i = dist.sizes[i]
            idx = np.repeat(full[None], sizes_i, axis=0)
            idx[:, i] = np.arange(sizes_i)
            flat = np.ravel_multi_index(idx.T, dist.sizes)
            pos = np.searchsorted(curve.values, own)
            vals = curve.ironed[pos]
            inreg = curve.in_region[pos]
            phi[flat[inreg], i] = vals[inreg]
            ps = curve.positive_part_sum()
            total_pos += m[ctx] * ps
            _, direct = best_restricted_price(own, c[ctx], float(L[ctx]), bool(strict[ctx]))
            worst = max(worst, abs(ps - direct))
    return phi, total_pos, worst


def _xos_context_scores(inst, dist, i):
    from .valuation import symbol_item_values
    n = inst.n
    rest = [j for j in range(n) if j != i]
    grids = np.meshgrid(*[np.arange(dist.sizes[j]) for j in rest], indexing="ij") if rest else []
    shape = tuple(dist.sizes[j] for j in rest)
    sc = np.zeros(shape + (n,))
    for g, j in zip(grids, rest):
        sc[..., j] = symbol_item_values(inst, j)[g]
    return sc


# ----------------------------------------------------------- decompose

def decompose(inst: MrfInstance, dist: JointDistribution, mech: Mechanism, r: float,
              family: str = "constrained_additive", phi: np.ndarray | None = None) -> BenchmarkTerms:
    """Benchmark terms for a mechanism on the full support."""
    from .valuation import symbol_item_values
    f = dist.pmf
    tv = dist.type_values()
    n = inst.n
    if family == "xos":
        V = item_values(inst, tv)
        fav = favorite(V)
        pi = mech.item_probs(n)
        if phi is None:
            phi, _, _ = ironed_context_values(inst, dist, lambda i: symbol_item_values(inst, i), xos=True)
        in_r = np.zeros((dist.size, n), dtype=bool)
        in_r[np.arange(dist.size), fav] = True
        single = float(f @ np.where(in_r, pi * np.nan_to_num(phi), 0.0).sum(axis=1))
        rest = np.ones((dist.size, n), dtype=bool)
        rest[np.arange(dist.size), fav] = False
        nf = float(f @ value_on_masks(inst, tv, rest))
        big = V >= 2 * r
        tail = float(f @ np.where(big & ~in_r, V, 0.0).sum(axis=1))
        core = float(f @ value_on_masks(inst, tv, ~big))
        return BenchmarkTerms("xos", r, single, nf, tail, core)

    t = tv
    fav = favorite(t)
    in_r = np.zeros((dist.size, n), dtype=bool)
    in_r[np.arange(dist.size), fav] = True
    R = best_feasible_subsets(inst, t, mech.sets)             # (N, sets, n)
    pi = np.einsum("ts,tsi->ti", mech.alloc, R.astype(float))
    if phi is None:
        phi, _, _ = ironed_context_values(inst, dist, lambda i: inst.symbol_values(i))
    single = float(f @ np.where(in_r, pi * np.nan_to_num(phi), 0.0).sum(axis=1))
    nf = float(f @ np.where(~in_r, pi * t, 0.0).sum(axis=1))
    low = at_most(t, r)
    tail = float(f @ np.where(~low & ~in_r, t, 0.0).sum(axis=1))
    core = float(f @ np.where(low, t, 0.0).sum(axis=1))
    return BenchmarkTerms("constrained_additive", r, single, nf, tail, core)


# ------------------------------------------------------------- prophet

@dataclass
class ProphetResult:
    threshold: float
    reward: float
    expected_max: float
    excess: float          # sum_i E[(g_i - tau)^+]
    alt_threshold: float | None
    alt_reward: float | None
    alt_excess: float | None
    report: VerificationReport = field(default_factory=VerificationReport)

    def as_dict(self) -> dict:
        return {"threshold": self.threshold, "reward": self.reward,
                "expected_max": self.expected_max, "excess": self.excess,
                "alt_threshold": self.alt_threshold, "alt_reward": self.alt_reward,
                "checks": self.report.to_json()}


def marginal_ironed_scores(inst: MrfInstance, dist: JointDistribution) -> np.ndarray:
    """g_i(t_i) = max(phi_i(t_i), 0) from the marginal of item i, per type."""
    sup = dist.support
    cols = []
    for i in range(inst.n):
        vals = inst.symbol_values(i)
        curve = myerson_single(vals, dist.marginal(i))
        g = np.maximum(curve.ironed[np.searchsorted(curve.values, vals)], 0.0)
        cols.append(g[sup[:, i]])
    return np.stack(cols, axis=1)


def median_threshold(G: np.ndarray, f: np.ndarray):
    """Smallest support value u of max_i g_i with Pr[max <= u] >= 1/2, and the next one up."""
    M = G.max(axis=1)
    keep = f > 0
    vals = np.unique(M[keep])
    cdf = np.array([f[keep][M[keep] <= u].sum() for u in vals])
    k = int(np.flatnonzero(cdf >= 0.5 - 1e-12)[0])
    nxt = float(vals[k + 1]) if k + 1 < vals.size else None
    return float(vals[k]), nxt


def stopping_reward(G: np.ndarray, f: np.ndarray, tau: float) -> float:
    """Reward of accepting the first index i with g_i >= tau."""
    hit = G >= tau
    first = np.argmax(hit, axis=1)
    got = np.where(hit.any(axis=1), G[np.arange(G.shape[0]), first], 0.0)
    return float(f @ got)


def prophet(inst: MrfInstance, dist: JointDistribution, delta: float,
            G: np.ndarray | None = None) -> ProphetResult:
    f = dist.pmf
    if G is None:
        G = marginal_ironed_scores(inst, dist)
    emax = float(f @ G.max(axis=1))
    tau, nxt = median_threshold(G, f)
    shrink = math.exp(-4 * delta) / 2

    def parts(tt):
        excess = float(f @ np.maximum(G - tt, 0.0).sum(axis=1))
        return stopping_reward(G, f, tt), excess

    rew, exc = parts(tau)
    alt_rew = alt_exc = None
    if nxt is not None:
        alt_rew, alt_exc = parts(nxt)
    rep = VerificationReport()

    def best_row(name, build):
        rows = [build(tau, rew, exc)]
        if nxt is not None:
            rows.append(build(nxt, alt_rew, alt_exc))
        row = max(rows, key=lambda c: c.slack)
        rep.add(row)

    best_row("prophet_threshold_bound",
             lambda tt, rw, ex: geq("prophet_threshold_bound", rw, 0.5 * tt + shrink * ex,
                                    note=f"tau={tt:.6g}"))
    best_row("prophet_max_bound",
             lambda tt, rw, ex: geq("prophet_max_bound", rw, shrink * emax, note=f"tau={tt:.6g}"))
    rep.add(leq("prophet_max_split", emax, tau + exc))
    return ProphetResult(tau, rew, emax, exc, nxt, alt_rew, alt_exc, rep)


# ------------------------------------------------------- ud mechanism

def index_tiebreak_revenue(V: np.ndarray, f: np.ndarray, prices: np.ndarray,
                           tol: float = 1e-9) -> float:
    """Buyer takes the smallest-index utility maximizer if its utility is >= 0."""
    U = V - prices[None, :]
    best = U.max(axis=1)
    choice = np.argmax(U >= best[:, None] - tol, axis=1)
    paid = np.where(best >= -tol, prices[choice], 0.0)
    return float(f @ paid)


@dataclass
class UdMechanism:
    threshold: float
    prices: np.ndarray
    withheld: list
    revenue: float

    def as_dict(self) -> dict:
        return {"threshold": self.threshold,
                "prices": [p if math.isfinite(p) else "inf" for p in self.prices.tolist()],
                "withheld": self.withheld, "revenue": self.revenue}


def ud_mechanism(inst: MrfInstance, dist: JointDistribution) -> UdMechanism:
    """Prices p_i = min{p in T_i : phi_i(p)^+ >= tau*} from the marginal ironing."""
    G = marginal_ironed_scores(inst, dist)
    tau, _ = median_threshold(G, dist.pmf)
    prices = np.full(inst.n, np.inf)
    withheld = []
    for i in range(inst.n):
        vals = inst.symbol_values(i)
        curve = myerson_single(vals, dist.marginal(i))
        ok = np.flatnonzero(np.maximum(curve.ironed, 0.0) >= tau - 1e-12)
        if ok.size:
            prices[i] = curve.values[ok[0]]
        else:
            withheld.append(i)
    V = item_values(inst, dist.type_values())
    return UdMechanism(tau, prices, withheld, index_tiebreak_revenue(V, dist.pmf, prices))


# --------------------------------------------------------- the analysis

class Analysis:
    """Lazily computed quantities of one instance, shared by all checks."""

    def __init__(self, inst: MrfInstance, dist: JointDistribution | None = None):
        from .mrf import joint_distribution
        self.inst = inst
        self.dist = dist if dist is not None else joint_distribution(inst)
        self.notes: list[str] = []

    @cached_property
    def dependence(self):
        return dependence_report(self.inst, self.dist)

    @property
    def delta(self) -> float:
        return self.dependence.delta

    @cached_property
    def srev(self):
        return srev(self.inst, self.dist)

    @cached_property
    def srev1(self):
        """One-item posted-price revenue (equals srev for non-additive kinds)."""
        if self.inst.valuation.kind != "additive":
            return self.srev
        V = item_values(self.inst, self.dist.type_values())
        return srev_one_item(V, self.dist.pmf)

    @cached_property
    def brev(self) -> float:
        return brev(self.inst, self.dist)[1]

    @cached_property
    def opt(self):
        """(mechanism, revenue) or None when the LP exceeds its caps."""
        try:
            return opt_revenue_lp(self.inst, self.dist)
        except LpTooLarge as exc:
            self.notes.append(f"OPT skipped: {exc}")
            return None

    @cached_property
    def chain(self):
        try:
            return glauber_chain(self.dist)
        except StateSpaceTooLarge as exc:
            self.notes.append(f"Glauber chain skipped: {exc}")
            return None

    @cached_property
    def dobrushin(self):
        return d_dobrushin(self.inst, self.dist, alpha=self.dependence.alpha_matrix)

    @cached_property
    def ronen(self):
        return ronen_copies(self.inst, self.dist)

    @cached_property
    def scalar_phi(self):
        return ironed_context_values(self.inst, self.dist, lambda i: self.inst.symbol_values(i))

    @cached_property
    def xos_phi(self):
        from .valuation import symbol_item_values
        return ironed_context_values(self.inst, self.dist,
                                     lambda i: symbol_item_values(self.inst, i), xos=True)

    def terms(self, mech: Mechanism | None = None):
        """(constrained-additive terms or None, XOS terms) for a mechanism (default OPT)."""
        if mech is None:
            if self.opt is None:
                return None, None
            mech = self.opt[0]
        ca = None
        if not self.inst.valuation.is_xos:
            ca = decompose(self.inst, self.dist, mech, self.srev.revenue,
                           "constrained_additive", self.scalar_phi[0])
        xo = decompose(self.inst, self.dist, mech, self.srev1.revenue, "xos", self.xos_phi[0])
        return ca, xo


# --------------------------------------------------------- theorem rows

def verify_theorems(inst: MrfInstance, dist: JointDistribution | None = None,
                    analysis: Analysis | None = None) -> VerificationReport:
    """Every inequality checked on one instance, one row each."""
    a = analysis or Analysis(inst, dist)
    inst, dist = a.inst, a.dist
    f = dist.pmf
    kind = inst.valuation.kind
    dep = a.dependence
    delta = dep.delta
    e4 = math.exp(4 * delta)
    rep = VerificationReport()

    # dependence parameters
    rep.add(leq("alpha_entries_le_beta", float((dep.alpha_matrix - dep.beta_matrix).max()), 0.0))
    rep.add(leq("alpha_le_beta", dep.alpha, dep.beta))
    rho = a.dobrushin.spectral_radius
    rep.add(leq("rho_le_alpha", rho, dep.alpha))
    rep.extend(conditional_bound_check(inst, dist))

    chain = a.chain
    if chain is not None:
        rep.extend(verify_gap_inequality(chain, [a.dobrushin]))

    sr, sr1, br = a.srev.revenue, a.srev1.revenue, a.brev
    opt = a.opt
    opt_rev = opt[1] if opt is not None else None
    if opt is not None:
        rep.add(geq("opt_ge_srev", opt_rev, sr1))
        if kind == "additive":
            rep.add(geq("opt_ge_srev_additive", opt_rev, sr))
        rep.add(geq("opt_ge_brev", opt_rev, br))
    else:
        rep.add(vacuous("opt_ge_srev", "; ".join(a.notes)))

    # ironing identity and the lookahead identity (scalar kinds)
    if not inst.valuation.is_xos:
        phi, pos_sum, worst = a.scalar_phi
        rep.add(close("ironing_identity", worst, 0.0, 1e-9))
        rep.add(close("single_sum_eq_ronen", pos_sum, a.ronen.revenue, 1e-9))
    _, _, xworst = a.xos_phi
    rep.add(close("ironing_identity_xos", xworst, 0.0, 1e-9))

    ca, xo = a.terms()
    if ca is not None:
        rep.add(leq("benchmark_duality", opt_rev, ca.duality_bound))
        rep.add(leq("nonfavorite_le_tail_core", ca.non_favorite, ca.tail + ca.core))
        rep.add(leq("benchmark_additive", opt_rev, ca.bound))
    if xo is not None:
        rep.add(leq("benchmark_xos_duality", opt_rev, xo.duality_bound))
        rep.add(leq("nonfavorite_le_tail_core_xos", xo.non_favorite, xo.tail + xo.core))
        rep.add(leq("benchmark_xos", opt_rev, xo.bound))

    if kind == "additive":
        rep.extend(_additive_rows(a, ca, opt_rev))
    if kind == "unit_demand":
        rep.extend(_unit_demand_rows(a, ca, opt_rev))
    rep.extend(_xos_rows(a, xo, opt_rev))
    return rep


def _additive_rows(a: Analysis, ca: BenchmarkTerms | None, opt_rev) -> VerificationReport:
    inst, dist = a.inst, a.dist
    delta = a.delta
    e4 = math.exp(4 * delta)
    rep = VerificationReport()
    r = a.srev.revenue
    sr, br = a.srev.revenue, a.brev
    if ca is not None:
        rep.add(leq("additive_single", ca.single, e4 * sr))
        rep.add(leq("additive_tail", ca.tail, e4 * sr))
        alpha = a.dependence.alpha
        rep.add(leq("tail_dobrushin", ca.tail, r * (1 + inst.n * alpha),
                    note="r = sum of per-item Myerson revenues"))
        above = sum(int((~at_most(inst.symbol_values(i), r)).sum()) for i in range(inst.n))
        rep.add(leq("tail_dobrushin_counted", ca.tail, r * (1 + alpha * above),
                    note=f"{above} symbols above r"))
    stats, rows = conc.truncated_variance_report(inst, dist, r, delta)
    rep.extend(rows)
    core = ca.core if ca is not None else stats.total_mean
    rep.add(close("truncated_mean_eq_core", stats.total_mean, core, 1e-10 * max(1.0, core)))
    rep.extend(conc.additive_bundle_rows(dist, stats, core, br, delta))
    if opt_rev is not None:
        rep.add(leq("theorem_additive", opt_rev,
                    (2 * e4 + math.sqrt(2)) * sr + 8 * (e4 + 1) * br))
    return rep


def _unit_demand_rows(a: Analysis, ca: BenchmarkTerms | None, opt_rev) -> VerificationReport:
    inst, dist = a.inst, a.dist
    delta = a.delta
    rep = VerificationReport()
    ronen = a.ronen.revenue
    if ca is not None:
        rep.add(leq("single_le_ronen", ca.single, ronen))
        rep.add(leq("nonfavorite_le_ronen", ca.non_favorite, ronen))
    G = marginal_ironed_scores(inst, dist)
    emax = float(dist.pmf @ G.max(axis=1))
    rep.add(leq("ronen_le_max_phi", ronen, math.exp(8 * delta) * emax))
    pr = prophet(inst, dist, delta, G)
    rep.extend(pr.report)
    ud = ud_mechanism(inst, dist)
    if opt_rev is not None:
        rep.add(geq("theorem_unit_demand", ud.revenue, opt_rev / (8 * math.exp(12 * delta)),
                    note=f"tau*={ud.threshold:.6g}"))
    s1 = a.srev1
    if s1.method == "exact":
        rep.add(leq("ud_mechanism_le_srev", ud.revenue, s1.revenue))
    else:
        rep.add(vacuous("ud_mechanism_le_srev", "SRev is a heuristic lower bound here"))
    return rep


def _xos_rows(a: Analysis, xo: BenchmarkTerms | None, opt_rev) -> VerificationReport:
    inst, dist = a.inst, a.dist
    f = dist.pmf
    delta = a.delta
    rep = VerificationReport()
    s1 = a.srev1.revenue
    br = a.brev
    tag = "" if a.srev1.method != "heuristic" else " (SRev heuristic: lower bound)"
    if xo is not None:
        rep.add(leq("xos_single", xo.single, 4 * math.exp(12 * delta) * s1, note=tag.strip()))
        rep.add(leq("xos_tail", xo.tail, math.exp(8 * delta) * s1, note=tag.strip()))
    r = s1
    V = item_values(inst, dist.type_values())
    rep.add(leq("xos_tail_probability", float(f @ (V >= 2 * r).sum(axis=1)), math.exp(4 * delta)))
    g, rows = conc.self_bounding_check(inst, dist, 2 * r)
    rep.extend(rows)
    chain = a.chain
    if chain is None:
        rep.add(vacuous("xos_core_bound", "no spectral gap: chain over the state cap"))
        return rep
    ng = chain.n_gap
    rep.extend(conc.xos_core_rows(g, f, s1, br, ng))
    _, prow = conc.poincare_report(dist, chain, g)
    rep.extend(VerificationReport([c for c in prow.rows if c.name == "poincare"]))
    if opt_rev is not None:
        rhs = 12 * math.exp(12 * delta) * s1 + (28 + 16 / math.sqrt(ng)) * max(s1, br)
        rep.add(leq("theorem_xos", opt_rev, rhs, note=tag.strip()))
        beta = a.dependence.beta
        if beta < 1:
            rhs_ht = 12 * math.exp(12 * beta) * s1 + (28 + 16 / math.sqrt(1 - beta)) * max(s1, br)
            rep.add(leq("theorem_xos_high_temperature", opt_rev, rhs_ht, note=tag.strip()))
        else:
            rep.add(vacuous("theorem_xos_high_temperature", f"beta={beta:.6g} >= 1"))
    return rep


def core_bundle_bound(inst: MrfInstance, dist: JointDistribution | None = None,
                      analysis: Analysis | None = None) -> VerificationReport:
    """Core against bundling: the XOS Core bound and, for additive buyers, the bundle step.

    The XOS rows use g(t) = v(t, C(t)) with cutoff 2 * SRev; the additive rows
    price the grand bundle at E[C] / 2 with C the sum of values at most SRev.
    """
    a = analysis or Analysis(inst, dist)
    inst, dist = a.inst, a.dist
    rep = VerificationReport()
    if inst.valuation.kind == "additive":
        stats, _ = conc.truncated_variance_report(inst, dist, a.srev.revenue, a.delta)
        rep.extend(conc.additive_bundle_rows(dist, stats, stats.total_mean, a.brev, a.delta))
    s1 = a.srev1.revenue
    g = conc.truncated_value(inst, dist.type_values(), 2 * s1)
    if a.chain is None:
        rep.add(vacuous("xos_core_bound", "no spectral gap: chain over the state cap"))
    else:
        rep.extend(conc.xos_core_rows(g, dist.pmf, s1, a.brev, a.chain.n_gap))
    return rep
