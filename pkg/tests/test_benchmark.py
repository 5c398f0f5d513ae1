import math

import numpy as np
import pytest

from conftest import build, pm_j, product2
from mechlab.benchmark import (Analysis, decompose, marginal_ironed_scores, median_threshold,
                               prophet, stopping_reward, ud_mechanism, verify_theorems)
from mechlab.mrf import joint_distribution
from mechlab.revenue import Mechanism, opt_revenue_lp
from mechlab.suite import random_instance
from mechlab.valuation import all_subsets, item_values, value


def _null(d, n):
    sets = all_subsets(n)
    alloc = np.zeros((d.size, len(sets)))
    alloc[:, 0] = 1.0
    return Mechanism(sets, alloc, np.zeros(d.size))


def _brute_terms(inst, d, mech, r):
    """Non-Favorite, Tail and Core of the additive family by explicit loops."""
    tv = d.type_values()
    pi = mech.item_probs(inst.n)
    nf = tail = core = 0.0
    for k in range(d.size):
        t = tv[k]
        fav = int(np.flatnonzero(t == t.max())[0])
        for i in range(inst.n):
            if t[i] <= r + 1e-12 * max(1, r):
                core += d.pmf[k] * t[i]
            elif i != fav:
                tail += d.pmf[k] * t[i]
            if i != fav:
                nf += d.pmf[k] * pi[k, i] * t[i]
    return nf, tail, core


def test_decompose_cutoff_above_support():
    inst = pm_j(0.4, values=(1.0, 3.0))
    d = joint_distribution(inst)
    mech, _ = opt_revenue_lp(inst, d)
    terms = decompose(inst, d, mech, 10.0)
    assert terms.tail == 0.0
    want = sum(d.marginal(i) @ inst.symbol_values(i) for i in range(2))
    assert terms.core == pytest.approx(want, abs=1e-14)


def test_null_mechanism_has_no_single():
    inst = random_instance(4, 2, kind="additive")
    d = joint_distribution(inst)
    for fam in ("constrained_additive", "xos"):
        terms = decompose(inst, d, _null(d, inst.n), 1.0, fam)
        assert terms.single == 0.0 and terms.non_favorite == 0.0


@pytest.mark.parametrize("index", range(25))
def test_benchmark_bounds_opt(index):
    inst = random_instance(13, index, n_max=2, kind="additive")
    a = Analysis(inst)
    mech, rev = a.opt
    ca, xo = a.terms()
    assert rev <= ca.bound + 1e-7
    assert rev <= xo.bound + 1e-7
    nf, tail, core = _brute_terms(inst, a.dist, mech, a.srev.revenue)
    assert ca.non_favorite == pytest.approx(nf, abs=1e-12)
    assert ca.tail == pytest.approx(tail, abs=1e-12)
    assert ca.core == pytest.approx(core, abs=1e-12)


def test_prophet_deterministic_scores():
    inst = build([((2.0,), (0.0,)), ((5.0,), (0.0,))])
    d = joint_distribution(inst)
    G = np.array([[2.0, 5.0]])
    res = prophet(inst, d, 0.0, G)
    assert res.expected_max == 5.0
    assert res.reward == 5.0


def test_prophet_two_uniform_bits():
    inst = product2(values=(0.0, 1.0))
    d = joint_distribution(inst)
    G = d.type_values()
    res = prophet(inst, d, 0.0, G)
    assert res.threshold == 1.0
    assert res.reward == pytest.approx(0.75) and res.expected_max == pytest.approx(0.75)


@pytest.mark.parametrize("index", range(15))
def test_prophet_product_half_of_max(index):
    base = random_instance(8, index, kind="unit_demand")
    inst = build([(it.alphabet, it.node_potential) for it in base.items], kind="unit_demand")
    d = joint_distribution(inst)
    res = prophet(inst, d, 0.0)
    assert res.report.passed
    G = marginal_ironed_scores(inst, d)
    tau, _ = median_threshold(G, d.pmf)
    assert stopping_reward(G, d.pmf, tau) >= 0.5 * res.expected_max - 1e-12


def test_median_threshold_definition():
    G = np.array([[0.0], [1.0], [2.0], [3.0]])
    f = np.array([0.1, 0.3, 0.4, 0.2])
    assert median_threshold(G, f) == (2.0, 3.0)


def test_ud_mechanism_point_mass():
    inst = build([((4.0,), (0.0,)), ((7.0,), (0.0,))], kind="unit_demand")
    ud = ud_mechanism(inst, joint_distribution(inst))
    assert ud.revenue == pytest.approx(7.0)
    assert ud.withheld == [0] and ud.prices[1] == 7.0


@pytest.mark.parametrize("J", [0.1, 0.5])
def test_ud_mechanism_pm_j(J):
    inst = pm_j(J, values=(1.0, 3.0), kind="unit_demand")
    a = Analysis(inst)
    ud = ud_mechanism(inst, a.dist)
    assert ud.revenue >= a.opt[1] / (8 * math.exp(12 * a.delta))


@pytest.mark.parametrize("index", range(10))
def test_ud_mechanism_product(index):
    base = random_instance(21, index, kind="unit_demand")
    inst = build([(it.alphabet, it.node_potential) for it in base.items], kind="unit_demand")
    a = Analysis(inst)
    assert ud_mechanism(inst, a.dist).revenue >= a.opt[1] / 8 - 1e-9


@pytest.mark.parametrize("kind", ["additive", "unit_demand", "constrained_additive", "xos"])
def test_verify_product_instances(kind):
    base = random_instance(17, 3, kind=kind)
    inst = build([(it.alphabet, it.node_potential) for it in base.items], kind=kind,
                 feasible_sets=base.valuation.feasible_sets, clauses=base.valuation.clauses)
    rep = verify_theorems(inst)
    assert rep.passed, rep.to_text()
    assert rep.row("theorem_xos").passed


def test_verify_negative_control():
    # an overcharging mechanism is not IC/IR, so its revenue may exceed the benchmark
    inst = pm_j(0.3, values=(1.0, 2.0))
    a = Analysis(inst)
    mech, rev = a.opt
    fake = Mechanism(mech.sets, mech.alloc, mech.payment * 50)
    ca, _ = a.terms(fake)
    assert fake.revenue(a.dist) > ca.bound
