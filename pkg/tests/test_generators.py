import itertools
import math

import numpy as np
import pytest
from scipy.special import zeta

from conftest import brute_pmf, build, pm_j
from mechlab.errors import DegenerateSupport, SupportTooLarge, ValidationError
from mechlab.generators import (copies_code, gen_copies, gen_mix, gen_shells, reduce_3wise,
                                shell_sequence)
from mechlab.mrf import dependence_report, joint_distribution
from mechlab.revenue import brev, myerson_single, ronen_copies, srev
from mechlab.suite import random_instance


def brute_alpha2(inst):
    """Dobrushin coefficient of a two-item law from explicit conditionals."""
    P = brute_pmf(inst).reshape(inst.sizes)
    out = 0.0
    for M in (P, P.T):
        rows = [M[:, b] / M[:, b].sum() for b in range(M.shape[1]) if M[:, b].sum() > 0]
        tv = [0.5 * np.abs(x - y).sum() for x, y in itertools.combinations(rows, 2)]
        out = max(out, max(tv, default=0.0))
    return out


def two_item_base(index):
    rng = np.random.default_rng(index)
    s1, s2 = int(rng.integers(2, 4)), int(rng.integers(2, 4))
    return build([(tuple(range(1, s1 + 1)), tuple(rng.uniform(-1, 1, s1))),
                  (tuple(range(1, s2 + 1)), tuple(rng.uniform(-1, 1, s2)))],
                 [((0, 1), tuple(rng.uniform(-1.5, 1.5, s1 * s2)))])


# ------------------------------------------------------------------ mix

@pytest.mark.parametrize("index", range(6))
@pytest.mark.parametrize("weight", [0.0, 0.25, 0.5, 1.0])
def test_mix_scales_dobrushin(index, weight):
    base = two_item_base(index)
    a0 = brute_alpha2(base)
    mixed = gen_mix(base, weight)
    d = joint_distribution(mixed)
    assert dependence_report(mixed, d).alpha == pytest.approx(weight * a0, abs=1e-9)
    assert brute_alpha2(mixed) == pytest.approx(weight * a0, abs=1e-9)
    d0 = joint_distribution(base)
    for i in range(2):
        assert np.abs(d.marginal(i) - d0.marginal(i)).max() < 1e-12
    assert mixed.metadata["generator"] == "mix" and mixed.metadata["weight"] == weight


def test_mix_zero_weight_is_product():
    base = pm_j(0.7)
    d = joint_distribution(gen_mix(base, 0.0))
    T = d.table()
    assert np.abs(T - np.outer(d.marginal(0), d.marginal(1))).max() < 1e-15
    assert all(x == 0.0 for it in gen_mix(base, 0.0).items for x in it.node_potential)


def test_mix_rejects_bad_input():
    with pytest.raises(ValidationError):
        gen_mix(build([((1.0,), (0.0,))]), 0.5)
    with pytest.raises(ValidationError):
        gen_mix(pm_j(0.3), 1.5)
    # a type that is impossible in the base stays impossible at weight 1
    hard = build([((1.0, 2.0), (0.0, 0.0)), ((1.0, 2.0), (0.0, 0.0))],
                 [((0, 1), (0.0, -2000.0, 0.0, 0.0))])
    with pytest.raises(DegenerateSupport):
        gen_mix(hard, 1.0)
    assert joint_distribution(gen_mix(hard, 0.5)).pmf.min() > 0


# --------------------------------------------------------------- copies

def test_copies_code_is_base_k():
    assert copies_code(11, 3, 3) == (1, 0, 2)
    codes = {copies_code(i, 4, 2) for i in range(16)}
    assert len(codes) == 16


@pytest.mark.parametrize("n,beta,k", [(1, 0.5, 4), (1, 1.0, 8), (2, 0.5, 3), (2, 0.3, 4)])
def test_copies_properties(n, beta, k):
    inst = gen_copies(n, beta, k)
    d = joint_distribution(inst)
    vals = inst.symbol_values(0)
    assert myerson_single(vals, d.marginal(0)).revenue == pytest.approx(1.0, abs=1e-12)
    # equal-revenue marginal: every price earns 1
    q = np.cumsum(d.marginal(0)[::-1])[::-1]
    assert np.allclose(vals * q, 1.0, atol=1e-10)
    assert dependence_report(inst, d).delta <= beta * n + 1e-12
    lower = 0.5 * (k / (1 + (k - 1) * math.exp(-2 * beta))) ** n
    assert ronen_copies(inst, d).revenue >= lower - 1e-9
    assert srev(inst, d).revenue < 2 and brev(inst, d)[1] < 2
    assert max(max(inst.symbol_values(j)) for j in range(1, n + 1)) <= 1 / (2 * n)


def test_copies_eps_validation():
    with pytest.raises(ValidationError):
        gen_copies(1, 0.5, 4, eps_scale=1.0)
    with pytest.raises(ValidationError):
        gen_copies(1, -0.1, 4)
    inst = gen_copies(1, 0.5, 4, eps_scale=0.125)
    assert inst.symbol_values(1).tolist() == [0.125, 0.25, 0.375, 0.5]


def test_copies_support_cap(monkeypatch):
    monkeypatch.setenv("MECHLAB_SUPPORT_CAP", "100")
    with pytest.raises(SupportTooLarge):
        gen_copies(2, 0.5, 4)


# --------------------------------------------------------------- shells

def test_shells_single_point():
    seq = shell_sequence(1)
    r = 1 / zeta(1.5)
    assert seq.points[1] == pytest.approx([r / math.sqrt(2)] * 2, abs=1e-15)
    assert seq.gap[1] == pytest.approx(zeta(1.5) ** -2, abs=1e-14)
    assert seq.gap[1] == pytest.approx(0.1466, abs=1e-4)   # 0.146531...
    assert seq.probs.tolist() == [1.0]


def test_shell_layout():
    seq = shell_sequence(60)
    assert np.all(np.linalg.norm(seq.points, axis=1) <= 1 + 1e-12)
    for N in range(1, seq.shell.max() + 1):
        idx = np.flatnonzero(seq.shell == N)
        assert seq.angles[idx[0]] == pytest.approx(math.pi / 4)
        if N < seq.shell.max():
            assert idx.size == math.ceil(N ** 0.75)
    # gaps against a direct double loop
    P = seq.points
    for i in (1, 7, 33, 60):
        want = min(float((P[i] - P[j]) @ P[i]) for j in range(i))
        assert seq.gap[i] == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("m", [1, 2, 5, 12, 40])
def test_shell_probabilities(m):
    seq = shell_sequence(m)
    assert seq.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(seq.probs > 0)
    C = seq.ratio_bound
    assert np.all(seq.probs >= C ** -np.arange(1, m + 1) - 1e-15)
    if m > 1:
        r = seq.xi[1:] / seq.xi[:-1]
        assert np.all(r >= 2 - 1e-9) and r.max() == pytest.approx(C)


def test_shell_gap_decay():
    seq = shell_sequence(200)
    i = np.arange(1, 201)
    scaled = seq.gap[1:] * i ** (6 / 7)
    assert scaled.max() / scaled.min() < 20


def test_shells_instance():
    seq, inst = gen_shells(4, c_target=1e6)
    assert inst.n == 2 and inst.valuation.kind == "additive"
    assert inst.metadata["c_target"] == 1e6 and inst.metadata["within_target"]
    d = joint_distribution(inst)
    # half shell law, half product of its marginals
    law = np.zeros(d.size)
    tv = d.type_values()
    for x, p in zip(seq.types, seq.probs):
        law[np.flatnonzero(np.all(np.isclose(tv, x, rtol=1e-12), axis=1))] += p
    prod = np.outer(d.marginal(0), d.marginal(1)).ravel()
    assert np.abs(d.pmf - (0.5 * law + 0.5 * prod)).max() < 1e-12


# ---------------------------------------------------------------- 3-wise

def test_3wise_generous_cap_copies_tables():
    base = pm_j(0.4)
    out = reduce_3wise(base, 1.0)
    assert out.n == 3 and out.metadata["auxiliaries"] == 1
    assert out.edges[0].members == (0, 1, 2) and out.edges[0].table == base.edges[0].table


def test_3wise_third_cap_splits_evenly():
    base = pm_j(0.9)
    out = reduce_3wise(base, 0.3)
    assert out.n == 5 and len(out.edges) == 3
    for e in out.edges:
        assert np.allclose(e.table, np.array(base.edges[0].table) / 3, atol=1e-15)
        assert max(abs(v) for v in e.table) <= 0.3 + 1e-12


@pytest.mark.parametrize("index", range(10))
def test_3wise_preserves_joint(index):
    base = random_instance(41, index, kind="additive")
    base = build([(it.alphabet, it.node_potential) for it in base.items],
                 [(e.members, e.table) for e in base.edges if len(e.members) == 2])
    cap = 0.25
    out = reduce_3wise(base, cap)
    want = brute_pmf(base)
    got = brute_pmf(out)          # auxiliaries have one symbol each, so no summing needed
    assert np.abs(got - want).max() < 1e-12
    assert all(max(abs(v) for v in e.table) <= cap + 1e-12 for e in out.edges)


def test_3wise_rejects_hyperedges():
    base = build([((1.0, 2.0), (0.0, 0.0))] * 3, [((0, 1, 2), (0.1,) * 8)])
    with pytest.raises(ValidationError):
        reduce_3wise(base, 0.5)
    with pytest.raises(ValidationError):
        reduce_3wise(pm_j(0.2), 0.0)
