"""Weighted-metric search on tree-structured MRFs.

For a tree with directed influences a[u, v] (how much item v moves item u)
and a positive weight w_e per edge, the weighted interdependence matrix has

    M[u, p] = w_e * a[u, p]      M[p, u] = a[p, u] / w_e      for e = (u, p),

with p the parent of u.  ``decide_k`` tests whether some weighting brings
every row sum down to k.  It walks the tree leaves-first and spends each
node's whole budget k on the edge to its parent, which leaves the parent as
much room as possible.  The smallest feasible k is found by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mrf import JointDistribution, MrfInstance, beta_matrix, influence_matrix
from .spectral import spectral_radius

LESS, EQUAL, GREATER = "less", "equal", "greater"
EQUAL_TOL = 1e-9


@dataclass
class TreeStructure:
    """A rooted forest over items 0..n-1 with directed influences on its edges.

    ``parent[u]`` is -1 for roots.  Items touching no edge are single-node
    trees.  ``alpha`` and ``beta`` are full n x n arrays; only tree edges
    are read.
    """

    parent: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    contracted: list = field(default_factory=list)   # edges (u, p) removed for zero influence

    @property
    def n(self) -> int:
        return self.parent.size

    @property
    def roots(self) -> list[int]:
        return [int(u) for u in np.flatnonzero(self.parent < 0)]

    @property
    def root(self) -> int:
        return self.roots[0]

    @property
    def edges(self) -> list[tuple]:
        """Tree edges as (child, parent) in increasing child order."""
        return [(int(u), int(self.parent[u])) for u in range(self.n) if self.parent[u] >= 0]

    def children(self, u: int) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.parent == u)]

    def postorder(self) -> list[int]:
        """Children before parents, every tree of the forest."""
        out: list[int] = []
        for r in self.roots:
            stack = [(r, False)]
            while stack:
                u, done = stack.pop()
                if done:
                    out.append(u)
                    continue
                stack.append((u, True))
                for c in reversed(self.children(u)):
                    stack.append((c, False))
        return out

    def component(self, u: int) -> int:
        while self.parent[u] >= 0:
            u = int(self.parent[u])
        return u

    def as_dict(self) -> dict:
        return {"parent": self.parent.tolist(), "edges": self.edges,
                "alpha": {f"{u},{p}": [float(self.alpha[u, p]), float(self.alpha[p, u])]
                          for u, p in self.edges},
                "contracted": self.contracted}


def tree_from_edges(n: int, edges, alpha: dict, beta: dict | None = None,
                    root: int = 0) -> TreeStructure:
    """Forest from undirected edges and directed influences {(u, v): a[u, v]}."""
    A = np.zeros((n, n))
    B = np.zeros((n, n))
    for (u, v), a in alpha.items():
        A[u, v] = a
    if beta is not None:
        for (u, v), b in beta.items():
            B[u, v] = b
    else:
        B = np.maximum(A, A.T)
    return _orient(n, [tuple(e) for e in edges], A, B, root)


def _orient(n, edges, A, B, root) -> TreeStructure:
    if np.any(A < 0) or np.any(B < 0):
        raise ValidationError("influences must be >= 0", "alpha")
    adj: list[list[int]] = [[] for _ in range(n)]
    seen = set()
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise ValidationError(f"bad edge ({u}, {v})", "edges")
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen.add(key)
        adj[u].append(v)
        adj[v].append(u)
    parent = np.full(n, -2, dtype=np.int64)
    order = [root] + [u for u in range(n) if u != root]
    for r in order:
        if parent[r] != -2:
            continue
        parent[r] = -1
        stack = [r]
        while stack:
            u = stack.pop()
            for v in sorted(adj[u]):
                if v == parent[u]:
                    continue
                if parent[v] != -2:
                    raise ValidationError("the pairwise edges contain a cycle", "edges")
                parent[v] = u
                stack.append(v)
    return TreeStructure(parent, A, B)


def tree_from_instance(inst: MrfInstance, dist: JointDistribution | None = None,
                       root: int = 0) -> TreeStructure:
    """Forest over the items from the instance's pairwise potentials.

    Influences are the conditional-TV entries of the joint distribution.
    """
    from .mrf import joint_distribution
    for e in inst.edges:
        if len(e.members) != 2:
            raise ValidationError("tree search needs pairwise potentials only", "edges")
    dist = dist if dist is not None else joint_distribution(inst)
    return _orient(inst.n, [e.members for e in inst.edges], influence_matrix(dist),
                   beta_matrix(inst), root)


def reroot(tree: TreeStructure, root: int) -> TreeStructure:
    out = _orient(tree.n, tree.edges + [tuple(e) for e in tree.contracted],
                  tree.alpha, tree.beta, root)
    return out


def contract(tree: TreeStructure, tol: float = 0.0) -> TreeStructure:
    """Drop edges whose influence is zero in either direction.

    Such an edge makes the matrix block-triangular across it, so it adds
    nothing to the spectral radius and the two sides decouple.
    """
    parent = tree.parent.copy()
    removed = list(tree.contracted)
    for u, p in tree.edges:
        if tree.alpha[u, p] <= tol or tree.alpha[p, u] <= tol:
            parent[u] = -1
            removed.append((u, p))
    return TreeStructure(parent, tree.alpha, tree.beta, removed)


# ------------------------------------------------------------- decide_k

@dataclass
class KDecision:
    k: float
    verdict: str                 # LESS, EQUAL or GREATER
    weights: dict                # (child, parent) -> w_e, filled when the walk completes
    root_sums: dict              # root -> its row sum under the weights
    failed_at: int | None = None

    def as_dict(self) -> dict:
        return {"k": self.k, "verdict": self.verdict,
                "weights": {f"{u},{p}": w for (u, p), w in self.weights.items()},
                "root_sums": {str(r): s for r, s in self.root_sums.items()},
                "failed_at": self.failed_at}


def decide_k(tree: TreeStructure, k: float) -> KDecision:
    """Is k below, at, or above the least achievable max row sum?

    Zero-influence edges are contracted first.
    """
    if not k > 0:
        raise ValidationError("k must be > 0", "k")
    t = contract(tree)
    A = t.alpha
    w: dict = {}
    down = np.zeros(t.n)   # sum over children c of a[u, c] / w_(c, u)
    roots: dict = {}
    for u in t.postorder():
        p = int(t.parent[u])
        if p < 0:
            roots[u] = float(down[u])
            continue
        room = k - down[u]
        if room <= 0:
            return KDecision(k, LESS, w, roots, failed_at=u)
        wu = room / A[u, p]
        w[(u, p)] = float(wu)
        down[p] += A[p, u] / wu
    worst = max(roots.values())
    if worst > k + EQUAL_TOL * max(1.0, k):
        verdict = LESS
    elif worst >= k - EQUAL_TOL * max(1.0, k):
        verdict = EQUAL
    else:
        verdict = GREATER
    return KDecision(k, verdict, w, roots)


def weighted_matrix(tree: TreeStructure, weights: dict, use_beta: bool = False) -> np.ndarray:
    """Interdependence matrix of the tree under edge weights (missing weights are 1)."""
    base = tree.beta if use_beta else tree.alpha
    M = np.zeros((tree.n, tree.n))
    for u, p in tree.edges + [tuple(e) for e in tree.contracted]:
        we = weights.get((u, p), 1.0)
        M[u, p] = we * base[u, p]
        M[p, u] = base[p, u] / we
    return M


@dataclass
class KStar:
    lo: float
    hi: float
    weights: dict
    iterations: int
    rho: float            # spectral radius of the witness matrix

    @property
    def value(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def as_dict(self) -> dict:
        return {"kstar": self.value, "bracket": [self.lo, self.hi],
                "weights": {f"{u},{p}": w for (u, p), w in self.weights.items()},
                "iterations": self.iterations, "witness_spectral_radius": self.rho,
                "note": "'equal' verdicts are tolerance statements (1e-9 on the root row sum)"}


def max_row_sum(tree: TreeStructure) -> float:
    return float(weighted_matrix(tree, {}).sum(axis=1).max(initial=0.0))


def kstar_search(tree: TreeStructure, eps: float = 1e-6) -> KStar:
    """Bisection on [0, max row sum at unit weights] to additive eps."""
    if not eps > 0:
        raise ValidationError("eps must be > 0", "eps")
    t = contract(tree)
    hi = max_row_sum(t)
    if hi <= 0:
        return KStar(0.0, 0.0, {}, 0, 0.0)
    lo = 0.0
    best = decide_k(t, hi)
    it = 0
    while hi - lo > eps:
        mid = 0.5 * (lo + hi)
        d = decide_k(t, mid)
        if d.verdict == LESS:
            lo = mid
        else:
            hi, best = mid, d
            if d.verdict == EQUAL:
                lo = max(lo, mid - eps / 2)
                hi = mid + eps / 2
                break
        it += 1
    rho, _ = spectral_radius(weighted_matrix(tree, best.weights))
    return KStar(lo, hi, best.weights, it, rho)


# ---------------------------------------------------------- sufficient k

@dataclass
class SufficientK:
    k: float
    rho: float
    passed: bool

    def as_dict(self) -> dict:
        return {"k": self.k, "rho": self.rho, "pass": self.passed}


def sufficient_k(tree: TreeStructure, weights: dict | None = None) -> SufficientK:
    """max_u of w_(u,p) b[u,p] + sum_c b[u,c] / w_(c,u), with b the beta entries.

    Also returns the spectral radius of the alpha matrix under the same
    weights, which can never exceed k.
    """
    weights = weights or {}
    for e, we in weights.items():
        if not we > 0:
            raise ValidationError(f"weight of edge {e} must be > 0", "weights")
    B = weighted_matrix(tree, weights, use_beta=True)
    k = float(B.sum(axis=1).max(initial=0.0))
    rho, _ = spectral_radius(weighted_matrix(tree, weights))
    return SufficientK(k, rho, rho <= k + 1e-9)


def balanced_edge_weight(b_up: float, b_down: float) -> float:
    """Weight of a lone edge that equalizes its two rows: sqrt(b_down / b_up)."""
    return math.sqrt(b_down / b_up)
