"""Constructed instances: mixing with the product law, COPIES, shells, 3-wise splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .errors import DegenerateSupport, SupportTooLarge, ValidationError
from .mrf import (HyperedgeSpec, ItemSpec, MrfInstance, ValuationSpec, joint_distribution,
                  support_cap, validate)

# ------------------------------------------------------------------ mix


def mix_tables(joint: np.ndarray, weight: float):
    """weight * joint + (1 - weight) * (product of its marginals)."""
    m1 = joint.sum(axis=1)
    m2 = joint.sum(axis=0)
    return weight * joint + (1.0 - weight) * np.outer(m1, m2), m1, m2


def instance_from_joint(joint: np.ndarray, alphabets, names, kind: str, metadata: dict,
                        clauses=None) -> MrfInstance:
    """Two-item instance with zero node potentials and log-pmf on the edge."""
    if np.any(joint <= 0):
        raise DegenerateSupport("some type has zero probability; its log-potential is -inf")
    table = np.log(joint)
    items = tuple(ItemSpec(nm, tuple(a), (0.0,) * len(a)) for nm, a in zip(names, alphabets))
    inst = MrfInstance(items, (HyperedgeSpec((0, 1), tuple(table.ravel().tolist())),),
                       ValuationSpec(kind, None, clauses), metadata)
    validate(inst)
    return inst


def gen_mix(base: MrfInstance, weight: float) -> MrfInstance:
    """Sample from ``base`` with probability ``weight``, else from the product of its marginals.

    Symbols with zero marginal mass are dropped.  The emitted instance
    records the bound |log((1 - weight) * p_min^2)| on its weighted degree,
    where p_min is the smallest marginal probability.
    """
    if base.n != 2:
        raise ValidationError("needs exactly two items", "items")
    if not 0.0 <= weight <= 1.0:
        raise ValidationError("must lie in [0, 1]", "weight")
    dist = joint_distribution(base)
    joint = dist.table()
    keep1 = joint.sum(axis=1) > 0
    keep2 = joint.sum(axis=0) > 0
    joint = joint[np.ix_(keep1, keep2)]
    mixed, m1, m2 = mix_tables(joint, weight)
    pmin = float(min(m1.min(), m2.min()))
    bound = abs(math.log((1.0 - weight) * pmin ** 2)) if weight < 1 else None
    alph = [tuple(a for a, k in zip(it.alphabet, keep)) for it, keep in zip(base.items, (keep1, keep2))]
    meta = {"generator": "mix", "weight": weight, "delta_bound": bound,
            "base": dict(base.metadata) if base.metadata else None}
    return instance_from_joint(mixed, alph, [it.name for it in base.items],
                               base.valuation.kind, meta, base.valuation.clauses)


# --------------------------------------------------------------- copies

def copies_code(index: int, k: int, n: int) -> tuple:
    """Base-k digits of ``index``, most significant first, n digits."""
    digits = []
    for _ in range(n):
        index, d = divmod(index, k)
        digits.append(d)
    return tuple(reversed(digits))


def gen_copies(n: int, beta: float, k: int, eps_scale: float | None = None) -> MrfInstance:
    """Item 0 with an equal-revenue marginal on {1, 2, ..., 2^(k^n - 1)} coupled to n small items.

    Each small item has k symbols l * eps_scale; the pairwise potential is
    +beta when the small item shows the matching digit of log2 t_0 and
    -beta otherwise.  Unit-demand valuation.
    """
    if n < 1 or k < 1:
        raise ValidationError("n and k must be >= 1", "n")
    if not beta >= 0:
        raise ValidationError("must be >= 0", "beta")
    m = k ** n
    if m * m > support_cap():
        raise SupportTooLarge(f"{m * m} types exceed the support cap {support_cap()}")
    eps = 1.0 / (1000 * n * k) if eps_scale is None else float(eps_scale)
    if not 0 < eps <= 1.0 / (2 * n * k):
        raise ValidationError(f"must lie in (0, 1/(2nk)] = (0, {1 / (2 * n * k):.6g}]", "eps_scale")
    top = [float(2 ** i) for i in range(m)]
    pot0 = [-(i + 1) * math.log(2) for i in range(m - 1)] + [-(m - 1) * math.log(2)]
    items = [ItemSpec("item0", tuple(top), tuple(pot0))]
    aux_pot = -math.log(math.exp(beta) + (k - 1) * math.exp(-beta))
    for j in range(n):
        items.append(ItemSpec(f"copy{j + 1}", tuple((l + 1) * eps for l in range(k)),
                              (aux_pot,) * k))
    edges = []
    codes = [copies_code(i, k, n) for i in range(m)]
    for j in range(n):
        table = np.full((m, k), -beta)
        for i, code in enumerate(codes):
            table[i, code[j]] = beta
        edges.append(HyperedgeSpec((0, j + 1), tuple(table.ravel().tolist())))
    meta = {"generator": "copies", "n": n, "beta": beta, "k": k, "eps_scale": eps,
            "ronen_lower_bound": 0.5 * (k / (1 + (k - 1) * math.exp(-2 * beta))) ** n}
    inst = MrfInstance(tuple(items), tuple(edges), ValuationSpec("unit_demand", None, None), meta)
    validate(inst)
    return inst


# --------------------------------------------------------------- shells

@dataclass
class ShellSequence:
    points: np.ndarray        # (m + 1, 2), row 0 is the origin
    shell: np.ndarray         # shell index N of each point (0 for the origin)
    angles: np.ndarray        # polar angle of each point
    gap: np.ndarray           # gap_i for i = 1..m (index 0 unused, nan)
    t: np.ndarray             # scale sequence t_i
    xi: np.ndarray            # ||x_i||_1
    types: np.ndarray         # (m, 2) two-item types x_i
    probs: np.ndarray         # probability of each x_i
    c1: float                 # measured min of xi-ratio / t-ratio
    t_ratio: float
    ratio_bound: float        # realized max xi_i / xi_(i-1)

    def as_dict(self) -> dict:
        return {"points": self.points.tolist(), "shell": self.shell.tolist(),
                "angles": self.angles.tolist(), "gap": self.gap[1:].tolist(),
                "t": self.t.tolist(), "xi": self.xi.tolist(), "types": self.types.tolist(),
                "probs": self.probs.tolist(), "c1": self.c1, "t_ratio": self.t_ratio,
                "ratio_bound": self.ratio_bound}


def shell_points(m: int):
    """Origin plus m points on shells of radius sum_{i<=N} i^-1.5 / zeta(1.5).

    Shell N holds ceil(N^0.75) points at angles pi/4 + j * (pi/2) / ceil(N^0.75),
    wrapped into [0, pi/2); so every shell starts on the 45 degree ray.
    """
    z = float(zeta(1.5))
    pts = [(0.0, 0.0)]
    shell = [0]
    angles = [0.0]
    N, radius = 0, 0.0
    while len(pts) <= m:
        N += 1
        radius += N ** -1.5
        P = math.ceil(N ** 0.75)
        for j in range(P):
            if len(pts) > m:
                break
            th = (math.pi / 4 + j * (math.pi / 2) / P) % (math.pi / 2)
            r = radius / z
            pts.append((r * math.cos(th), r * math.sin(th)))
            shell.append(N)
            angles.append(th)
    return np.array(pts), np.array(shell), np.array(angles)


def gaps(points: np.ndarray) -> np.ndarray:
    """gap_i = min_{j<i} (g_i - g_j) . g_i, with nan at i = 0."""
    out = np.full(points.shape[0], np.nan)
    for i in range(1, points.shape[0]):
        g = points[i]
        out[i] = float(((g[None, :] - points[:i]) @ g).min())
    return out


def shell_sequence(m: int) -> ShellSequence:
    if m < 1:
        raise ValidationError("must be >= 1", "m")
    pts, shell, angles = shell_points(m)
    gap = gaps(pts)
    l1 = np.abs(pts).sum(axis=1)
    idx = np.arange(1, m + 1)
    # xi_i / xi_(i-1) = (t_i / t_(i-1)) * (l1_i / l1_(i-1)) * (gap_(i-1) / gap_i)
    geo = (l1[idx[1:]] / l1[idx[:-1]]) * (gap[idx[:-1]] / gap[idx[1:]])
    c1 = float(geo.min()) if geo.size else 1.0
    ratio = max(2.0 / c1, 2.0)
    base = l1[1] / gap[1]
    t = ratio ** np.arange(m) / base            # so that xi_1 = 1
    x = (t / gap[idx])[:, None] * pts[idx]
    xi = np.abs(x).sum(axis=1)
    tail = np.append(xi[1:], np.inf)
    probs = xi[0] / xi - xi[0] / tail
    bound = float((xi[1:] / xi[:-1]).max()) if m > 1 else 1.0
    return ShellSequence(pts, shell, angles, gap, t, xi, x, probs, c1, ratio, bound)


def gen_shells(m: int, c_target: float | None = None, weight: float = 0.5):
    """(ShellSequence, two-item additive instance mixing the shell law with its product).

    ``c_target`` is the intended bound on consecutive xi ratios; the
    realized bound is measured and compared against it in the metadata.
    """
    seq = shell_sequence(m)
    a1, inv1 = np.unique(seq.types[:, 0], return_inverse=True)
    a2, inv2 = np.unique(seq.types[:, 1], return_inverse=True)
    joint = np.zeros((a1.size, a2.size))
    np.add.at(joint, (inv1, inv2), seq.probs)
    mixed, _, _ = mix_tables(joint, weight)
    meta = {"generator": "shells", "m": m, "weight": weight, "c1": seq.c1,
            "t_ratio": seq.t_ratio, "ratio_bound": seq.ratio_bound,
            "angle_grid": "pi/4 + j*(pi/2)/ceil(N^0.75) mod pi/2", "c_target": c_target,
            "within_target": None if c_target is None else bool(seq.ratio_bound <= c_target)}
    inst = instance_from_joint(mixed, [a1.tolist(), a2.tolist()], ["item0", "item1"],
                               "additive", meta)
    return seq, inst


# ---------------------------------------------------------------- 3-wise

def max_edge_potential(inst: MrfInstance) -> float:
    return max((max(abs(v) for v in e.table) for e in inst.edges), default=0.0)


def reduce_3wise(base: MrfInstance, cap: float) -> MrfInstance:
    """Split every pairwise potential evenly over 3-edges through constant auxiliary items.

    ceil(B / cap) single-symbol items are appended (B = largest |pairwise
    potential|, at least one item), so each piece has |value| <= cap.  The
    auxiliaries carry value 0, so the joint over the original items is
    unchanged.
    """
    if not cap > 0:
        raise ValidationError("must be > 0", "beta_cap")
    if any(len(e.members) != 2 for e in base.edges):
        raise ValidationError("base must have pairwise potentials only", "edges")
    B = max_edge_potential(base)
    count = max(1, math.ceil(B / cap - 1e-9))
    n = base.n
    zero = tuple([0.0] * base.valuation.clauses) if base.valuation.is_xos else 0.0
    aux = tuple(ItemSpec(f"aux{a}", (zero,), (0.0,)) for a in range(count))
    edges = []
    for e in base.edges:
        piece = tuple(v / count for v in e.table)
        for a in range(count):
            edges.append(HyperedgeSpec((e.members[0], e.members[1], n + a), piece))
    meta = {"generator": "3wise", "beta_cap": cap, "auxiliaries": count,
            "base": dict(base.metadata) if base.metadata else None}
    inst = MrfInstance(base.items + aux, tuple(edges), base.valuation, meta)
    validate(inst)
    return inst
