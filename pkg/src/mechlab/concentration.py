"""Variance tools: truncated sums, the Poincare inequality, self-bounding checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mrf import JointDistribution, MrfInstance
from .report import VerificationReport, close, geq, leq, vacuous
from .spectral import GlauberChain
from .valuation import at_most, item_values, value_on_masks


@dataclass
class TruncatedSumStats:
    r: float
    mean: np.ndarray       # E[C_i]
    var: np.ndarray        # Var[C_i]
    cov: np.ndarray        # full covariance matrix of (C_i)
    total_mean: float      # E[C]
    total_var: float       # Var[C]

    def as_dict(self) -> dict:
        return {"r": self.r, "mean": self.mean.tolist(), "var": self.var.tolist(),
                "cov": self.cov.tolist(), "total_mean": self.total_mean,
                "total_var": self.total_var}


def truncated_variance_report(inst: MrfInstance, dist: JointDistribution, r: float,
                              delta: float):
    """Moments of C_i = t_i * 1[t_i <= r] with the covariance bounds checked."""
    if inst.valuation.is_xos:
        raise ValidationError("needs scalar item values", "valuation.kind")
    f = dist.pmf
    tv = dist.type_values()
    C = np.where(at_most(tv, r), tv, 0.0)
    mean = f @ C
    centered = C - mean
    cov = (centered * f[:, None]).T @ centered
    total = C.sum(axis=1)
    tmean = float(f @ total)
    tvar = float(f @ (total - tmean) ** 2)
    stats = TruncatedSumStats(r, mean, np.diag(cov).copy(), cov, tmean, tvar)

    k = math.exp(4 * delta) - 1.0
    rep = VerificationReport()
    n = inst.n
    for i in range(n):
        for j in range(i + 1, n):
            rep.add(leq(f"truncated_cov[{i},{j}]", cov[i, j], k * mean[i] * mean[j]))
    rep.add(leq("truncated_var", tvar, 2 * r * r + k * tmean * tmean))
    rep.add(close("truncated_var_decomposition", tvar, float(cov.sum()), 1e-10 * max(1.0, tvar)))
    return stats, rep


# ------------------------------------------------------------- Poincare

def conditional_means(dist: JointDistribution, g: np.ndarray):
    """E[g | t_-i] broadcast back onto the support, one array per item."""
    G = np.asarray(g, dtype=float).reshape(dist.sizes)
    out = []
    for i in range(dist.n):
        cond, _ = dist.conditional_table(i)
        out.append(np.broadcast_to((cond * G).sum(axis=i, keepdims=True), dist.sizes).reshape(-1))
    return out


def efron_stein_sum(dist: JointDistribution, g: np.ndarray) -> float:
    """sum_i E[(g - E[g | t_-i])^2]."""
    f = dist.pmf
    return float(sum(f @ (g - m) ** 2 for m in conditional_means(dist, g)))


@dataclass
class PoincareResult:
    lhs: float             # n*gamma*Var[g]
    rhs: float             # sum_i E[(g - E[g|t_-i])^2]
    variance: float
    extremal_ratio: float  # rhs/Var at the second eigenfunction

    def as_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "variance": self.variance,
                "extremal_ratio": self.extremal_ratio}


def poincare_report(dist: JointDistribution, chain: GlauberChain, g: np.ndarray):
    f = dist.pmf
    g = np.asarray(g, dtype=float)
    mean = float(f @ g)
    var = float(f @ (g - mean) ** 2)
    rhs = efron_stein_sum(dist, g)
    gstar = chain.second_eigenfunction()
    vstar = float(f @ (gstar - f @ gstar) ** 2)
    ratio = efron_stein_sum(dist, gstar) / vstar if vstar > 0 else math.nan
    res = PoincareResult(chain.n_gap * var, rhs, var, ratio)

    rep = VerificationReport()
    if var <= 1e-300:
        rep.add(vacuous("poincare", "g is constant on the support: both sides are 0"))
    else:
        rep.add(leq("poincare", res.lhs, rhs))
    if math.isnan(ratio):
        rep.add(vacuous("poincare_extremal", "single-state chain: no second eigenfunction"))
    else:
        rep.add(close("poincare_extremal", ratio, chain.n_gap, 1e-6))
    # law of total variance for every coordinate
    for i, m in enumerate(conditional_means(dist, g)):
        inner = float(f @ (g - m) ** 2)
        outer = float(f @ (m - mean) ** 2)
        rep.add(close(f"total_variance[{i}]", inner + outer, var, 1e-10 * max(1.0, var)))
    return res, rep


# -------------------------------------------------------- self-bounding

def truncated_value(inst: MrfInstance, tv: np.ndarray, cutoff: float) -> np.ndarray:
    """g(t) = v(t, C(t)) with C(t) = {i : V_i(t) < cutoff}."""
    V = item_values(inst, tv)
    return value_on_masks(inst, tv, V < cutoff)


def self_bounding_check(inst: MrfInstance, dist: JointDistribution, cutoff: float):
    """Pointwise self-bounding of g = v(t, C(t)) and the resulting variance sum.

    g_i drops item i by replacing its symbol with the zero value.
    """
    tv = dist.type_values()
    g = truncated_value(inst, tv, cutoff)
    drops = []
    for i in range(inst.n):
        tz = tv.copy()
        tz[:, i] = 0.0
        drops.append(g - truncated_value(inst, tz, cutoff))
    D = np.stack(drops, axis=1)
    rep = VerificationReport()
    rep.add(geq("self_bounding_nonneg", float(D.min()), 0.0))
    rep.add(leq("self_bounding_step", float(D.max()), cutoff))
    rep.add(leq("self_bounding_sum", float((D.sum(axis=1) - g).max()), 0.0))
    f = dist.pmf
    rep.add(leq("self_bounding_variance_sum", efron_stein_sum(dist, g), cutoff * float(f @ g)))
    return g, rep


# ------------------------------------------------------ Core vs bundling

def xos_core_rows(g: np.ndarray, f: np.ndarray, srev1: float, brev: float,
                  n_gap: float) -> VerificationReport:
    """Core bound through the Poincare variance bound and Paley-Zygmund at 1/3."""
    rep = VerificationReport()
    core = float(f @ g)
    var = float(f @ (g - core) ** 2)
    root = math.sqrt(n_gap)
    rep.add(leq("xos_core_variance", var, 2 * srev1 * core / n_gap))
    rep.add(leq("xos_core_bound", core, max(4 * srev1 / root, (7 + 4 / root) * brev)))
    if core > 4 * srev1 / root:
        measured = float(f[g >= core / 3].sum())
        pz = (4.0 / 9.0) / (1.0 + var / core ** 2) if core > 0 else 0.0
        rep.add(geq("xos_paley_zygmund", measured, pz))
    else:
        rep.add(vacuous("xos_paley_zygmund",
                        f"branch not taken: Core={core:.6g} <= 4*SRev/sqrt(n*gamma)={4 * srev1 / root:.6g}"))
    return rep


def additive_bundle_rows(dist: JointDistribution, stats: TruncatedSumStats, core: float,
                         brev: float, delta: float) -> VerificationReport:
    rep = VerificationReport()
    e4 = math.exp(4 * delta)
    r = stats.r
    if stats.total_mean > math.sqrt(2) * r:
        total = dist.type_values().sum(axis=1)
        sell = float(dist.pmf[total >= stats.total_mean / 2].sum())
        rep.add(geq("additive_bundle_sell_prob", sell, 1.0 / (4 * (e4 + 1))))
        rep.add(leq("additive_core_vs_brev", core, 8 * (e4 + 1) * brev))
    else:
        note = f"branch not taken: E[C]={stats.total_mean:.6g} <= sqrt(2)*r={math.sqrt(2) * r:.6g}"
        rep.add(vacuous("additive_bundle_sell_prob", note))
        rep.add(vacuous("additive_core_vs_brev", note))
    return rep
