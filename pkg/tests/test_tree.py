import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from conftest import build
from mechlab.errors import ValidationError
from mechlab.mrf import joint_distribution
from mechlab.tree import (EQUAL, GREATER, LESS, balanced_edge_weight, decide_k, kstar_search,
                          reroot, sufficient_k, tree_from_edges, tree_from_instance,
                          weighted_matrix)

EPS = 1e-4


def sym(edges, a):
    """Symmetric influences a on every edge."""
    out = {}
    for u, v in edges:
        out[(u, v)] = out[(v, u)] = a
    return out


def grid_kstar(tree):
    """min over log-weights of the max row sum: a coarse weight grid, then SLSQP on the epigraph.

    The cost is convex in the log-weights, so the local polish from the best
    grid point reaches the global minimum.
    """
    edges = tree.edges
    if not edges:
        return 0.0
    A = tree.alpha

    def rows(logw):
        M = np.zeros((tree.n, tree.n))
        for (u, p), lw in zip(edges, logw):
            w = math.exp(lw)
            M[u, p] = w * A[u, p]
            M[p, u] = A[p, u] / w
        return M.sum(axis=1)

    axis = np.linspace(-3, 3, 13)
    start = min(itertools.product(axis, repeat=len(edges)), key=lambda x: rows(x).max())
    x0 = np.append(start, rows(start).max())
    res = minimize(lambda z: z[-1], x0, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda z: z[-1] - rows(z[:-1])}],
                   options={"ftol": 1e-12, "maxiter": 500})
    return float(rows(res.x[:-1]).max())


def test_path_of_two():
    a = 0.3
    t = tree_from_edges(2, [(0, 1)], sym([(0, 1)], a))
    assert decide_k(t, a).verdict == EQUAL
    k = kstar_search(t, 1e-6)
    assert abs(k.value - a) <= 1e-6


def test_star():
    a = 0.4
    edges = [(0, 1), (0, 2)]
    t = tree_from_edges(3, edges, sym(edges, a))
    assert decide_k(t, math.sqrt(2) * a).verdict == EQUAL
    assert decide_k(t, a).verdict == LESS
    assert decide_k(t, 2 * a).verdict == GREATER
    assert abs(kstar_search(t, EPS).value - math.sqrt(2) * a) <= 2 * EPS


def test_below_min_edge_is_less():
    edges = [(0, 1), (1, 2), (1, 3)]
    t = tree_from_edges(4, edges, sym(edges, 0.5))
    assert decide_k(t, 0.2).verdict == LESS


def test_product_tree_contracts_to_zero():
    edges = [(0, 1), (1, 2)]
    t = tree_from_edges(3, edges, sym(edges, 0.0))
    assert kstar_search(t, EPS).value == 0.0


def test_one_way_influence_is_contracted():
    t = tree_from_edges(2, [(0, 1)], {(0, 1): 0.6, (1, 0): 0.0})
    assert kstar_search(t, 1e-6).value == pytest.approx(0.0, abs=1e-6)
    # the matrix is triangular, so its spectral radius is 0 as well
    assert abs(np.linalg.eigvals(weighted_matrix(t, {})).max()) < 1e-12


def random_tree(rng, n_edges):
    n = n_edges + 1
    edges = [(k, int(rng.integers(0, k))) for k in range(1, n)]
    grid = np.round(np.arange(0.1, 1.0, 0.1), 1)
    alpha = {}
    for u, v in edges:
        alpha[(u, v)] = float(rng.choice(grid))
        alpha[(v, u)] = float(rng.choice(grid))
    return tree_from_edges(n, edges, alpha)


@pytest.mark.parametrize("n_edges", [1, 2, 3, 4])
@pytest.mark.parametrize("seed", range(6))
def test_kstar_matches_grid_and_perron(n_edges, seed):
    t = random_tree(np.random.default_rng([n_edges, seed]), n_edges)
    k = kstar_search(t, EPS)
    assert abs(k.value - grid_kstar(t)) <= 5e-3
    perron = float(np.abs(np.linalg.eigvals(weighted_matrix(t, {}))).max())
    assert abs(k.value - perron) <= 2 * EPS
    assert decide_k(t, k.value + 2 * EPS).verdict == GREATER
    assert decide_k(t, k.value - 2 * EPS).verdict == LESS
    # witness weights realize k* up to the search width
    assert weighted_matrix(t, k.weights).sum(axis=1).max() <= k.hi + 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n_edges=st.integers(1, 6), root=st.integers(0, 6))
def test_kstar_independent_of_root(seed, n_edges, root):
    t = random_tree(np.random.default_rng(seed), n_edges)
    other = reroot(t, root % t.n)
    assert abs(kstar_search(t, EPS).value - kstar_search(other, EPS).value) <= 2 * EPS


def test_sufficient_k_unit_weights_is_beta():
    edges = [(0, 1), (1, 2), (1, 3)]
    beta = {(0, 1): 0.2, (1, 0): 0.2, (1, 2): 0.1, (2, 1): 0.1, (1, 3): 0.3, (3, 1): 0.3}
    t = tree_from_edges(4, edges, {e: b / 2 for e, b in beta.items()}, beta)
    res = sufficient_k(t)
    B = np.zeros((4, 4))
    for (u, v), b in beta.items():
        B[u, v] = b
    assert res.k == pytest.approx(B.sum(axis=1).max())
    assert res.passed and res.rho <= res.k


@pytest.mark.parametrize("b", [2, 3])
def test_sufficient_k_b_ary(b):
    depth = 3
    parents = [-1]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for p in frontier:
            for _ in range(b):
                parents.append(p)
                nxt.append(len(parents) - 1)
        frontier = nxt
    n = len(parents)
    edges = [(u, parents[u]) for u in range(1, n)]
    bval = 0.99 / (2 * math.sqrt(b))
    beta = sym(edges, bval)
    t = tree_from_edges(n, edges, {e: 0.5 * v for e, v in beta.items()}, beta)
    weights = {e: math.sqrt(b) for e in t.edges}
    res = sufficient_k(t, weights)
    assert res.k < 1 and res.passed


def test_balanced_single_edge():
    b12, b21 = 0.36, 0.04
    t = tree_from_edges(2, [(0, 1)], {(0, 1): 0.1, (1, 0): 0.02}, {(0, 1): b12, (1, 0): b21},
                        root=0)
    (u, p), = t.edges
    w = balanced_edge_weight(t.beta[u, p], t.beta[p, u])
    res = sufficient_k(t, {(u, p): w})
    # both rows equal sqrt(b12 * b21); their sum is the 2 * sqrt form
    B = weighted_matrix(t, {(u, p): w}, use_beta=True)
    assert B.sum(axis=1) == pytest.approx([math.sqrt(b12 * b21)] * 2)
    assert res.k == pytest.approx(math.sqrt(b12 * b21))
    # no other weight does better
    for lw in np.linspace(-3, 3, 121):
        assert sufficient_k(t, {(u, p): math.exp(lw)}).k >= res.k - 1e-12


def test_tree_from_instance_and_cycle():
    inst = build([((1.0, 2.0), (0.0, 0.0))] * 3,
                 [((0, 1), (0.5, -0.5, -0.5, 0.5)), ((1, 2), (0.2, -0.2, -0.2, 0.2))])
    t = tree_from_instance(inst, joint_distribution(inst))
    assert sorted(t.edges) == [(1, 0), (2, 1)]
    assert t.alpha[0, 1] > 0 and t.beta[0, 1] == pytest.approx(0.5)
    loop = build([((1.0, 2.0), (0.0, 0.0))] * 3,
                 [((0, 1), (0.5, -0.5, -0.5, 0.5)), ((1, 2), (0.2, -0.2, -0.2, 0.2)),
                  ((0, 2), (0.1, -0.1, -0.1, 0.1))])
    with pytest.raises(ValidationError):
        tree_from_instance(loop)
