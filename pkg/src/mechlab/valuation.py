"""Buyer valuations over item sets, per-item values, favorite regions.

Type values come in as ``tv``: an array of shape (N, n) for scalar kinds or
(N, n, K) for XOS clause vectors, one row per support type.  Item sets are
tuples of increasing indices; ``all_subsets(n)`` lists them by bitmask so
that set ``S`` sits at position ``sum(1 << i for i in S)``.
"""
from __future__ import annotations

import numpy as np

from .mrf import MrfInstance


def all_subsets(n: int) -> list[tuple]:
    return [tuple(i for i in range(n) if (mask >> i) & 1) for mask in range(1 << n)]


def set_mask(S) -> int:
    return sum(1 << i for i in S)


def feasible_family(inst: MrfInstance) -> list[tuple]:
    """Sets the buyer can use simultaneously (additive: all of them)."""
    n = inst.n
    kind = inst.valuation.kind
    if kind == "unit_demand":
        return [()] + [(i,) for i in range(n)]
    if kind == "constrained_additive":
        return sorted(set(inst.valuation.feasible_sets), key=set_mask)
    return all_subsets(n)


def value(inst: MrfInstance, t, S) -> float:
    """v(t, S) for a single type given as per-item symbol values."""
    tv = np.asarray(t, dtype=float)[None]
    return float(set_values(inst, tv, [tuple(S)])[0, 0])


def set_values(inst: MrfInstance, tv: np.ndarray, sets) -> np.ndarray:
    """v(t, S) for every type row and every set: shape (N, len(sets))."""
    tv = np.asarray(tv, dtype=float)
    N = tv.shape[0]
    kind = inst.valuation.kind
    out = np.zeros((N, len(sets)))
    if kind == "xos":
        for k, S in enumerate(sets):
            if S:
                out[:, k] = tv[:, list(S), :].sum(axis=1).max(axis=1)
        return out
    if kind == "additive":
        for k, S in enumerate(sets):
            if S:
                out[:, k] = tv[:, list(S)].sum(axis=1)
        return out
    if kind == "unit_demand":
        for k, S in enumerate(sets):
            if S:
                out[:, k] = tv[:, list(S)].max(axis=1)
        return out
    fam = feasible_family(inst)
    fam_vals = np.stack([tv[:, list(R)].sum(axis=1) if R else np.zeros(N) for R in fam], axis=1)
    for k, S in enumerate(sets):
        inside = [c for c, R in enumerate(fam) if set(R) <= set(S)]
        out[:, k] = fam_vals[:, inside].max(axis=1)
    return out


def best_feasible_subsets(inst: MrfInstance, tv: np.ndarray, sets) -> np.ndarray:
    """Indicator of a value-attaining feasible subset R*(t, S) inside each S.

    Returns a boolean array (N, len(sets), n).  Among maximizers the
    largest set wins, then the smallest bitmask, so additive buyers get S
    itself.  For XOS every item of S is marked (allocation is S).
    """
    tv = np.asarray(tv, dtype=float)
    N, n = tv.shape[0], inst.n
    out = np.zeros((N, len(sets), n), dtype=bool)
    kind = inst.valuation.kind
    if kind in ("additive", "xos"):
        for k, S in enumerate(sets):
            out[:, k, list(S)] = True
        return out
    fam = feasible_family(inst)
    order = sorted(range(len(fam)), key=lambda c: (-len(fam[c]), set_mask(fam[c])))
    fam = [fam[c] for c in order]
    fam_vals = np.stack([tv[:, list(R)].sum(axis=1) if R else np.zeros(N) for R in fam], axis=1)
    for k, S in enumerate(sets):
        inside = [c for c, R in enumerate(fam) if set(R) <= set(S)]
        vals = fam_vals[:, inside]
        best = vals.max(axis=1, keepdims=True)
        # first maximizer in the preference order, with a relative tolerance
        hit = vals >= best - 1e-12 * np.maximum(1.0, np.abs(best))
        pick = np.array(inside)[np.argmax(hit, axis=1)]
        for c in np.unique(pick):
            R = fam[c]
            if R:
                rows = pick == c
                out[np.ix_(rows, [k], list(R))] = True
    return out


def item_values(inst: MrfInstance, tv: np.ndarray) -> np.ndarray:
    """V_i(t) = v(t, {i}) for every type row: shape (N, n)."""
    tv = np.asarray(tv, dtype=float)
    if inst.valuation.is_xos:
        return tv.max(axis=2)
    if inst.valuation.kind == "constrained_additive":
        fam = set(inst.valuation.feasible_sets)
        ok = np.array([(i,) in fam for i in range(inst.n)])
        return np.where(ok[None, :], tv, 0.0)
    return tv.copy()


def symbol_item_values(inst: MrfInstance, i: int) -> np.ndarray:
    """V_i as a function of item i's alphabet index."""
    vals = inst.symbol_values(i)
    if inst.valuation.is_xos:
        return vals.max(axis=1)
    if inst.valuation.kind == "constrained_additive" and (i,) not in set(inst.valuation.feasible_sets):
        return np.zeros_like(vals)
    return vals


def region_scores(inst: MrfInstance, tv: np.ndarray) -> np.ndarray:
    """Per-item scores that define the favorite item: t_i, or V_i for XOS."""
    tv = np.asarray(tv, dtype=float)
    return tv.max(axis=2) if inst.valuation.is_xos else tv


def favorite(scores: np.ndarray) -> np.ndarray:
    """Smallest index attaining the row maximum."""
    return np.argmax(scores, axis=1)


def classify(inst: MrfInstance, tv: np.ndarray, cutoff: float):
    """(V table, favorite index per type, C(t) mask with V_i(t) < cutoff)."""
    V = item_values(inst, tv)
    fav = favorite(region_scores(inst, tv))
    return V, fav, V < cutoff


def value_on_masks(inst: MrfInstance, tv: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """v(t, S(t)) where S(t) is given per row as a boolean item mask."""
    n = inst.n
    subsets = all_subsets(n)
    vals = set_values(inst, tv, subsets)
    idx = (np.asarray(masks, dtype=np.int64) * (1 << np.arange(n))).sum(axis=1)
    return vals[np.arange(vals.shape[0]), idx]


def at_most(x, r: float, rel: float = 1e-12):
    """x <= r, forgiving rounding in r (r is usually a computed revenue)."""
    return np.asarray(x) <= r + rel * max(1.0, abs(r))
