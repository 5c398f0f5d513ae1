import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import build, pm_j, product2
from mechlab.errors import NonPositiveScale, StateSpaceTooLarge
from mechlab.mrf import joint_distribution
from mechlab.spectral import (d_dobrushin, glauber_chain, jacobi_eigh, sample_chain,
                              spectral_radius, tv_curve, verify_gap_inequality)
from mechlab.suite import random_instance


def _sym(chain):
    pi = chain.stationary
    s = np.sqrt(pi)
    return s[:, None] * chain.transition / s[None, :]


def test_product_binary_gap_is_half():
    chain = glauber_chain(joint_distribution(product2()))
    assert chain.gap == pytest.approx(0.5, abs=1e-12)
    # oracle: LAPACK on the same symmetrized matrix
    w = np.linalg.eigvalsh(0.5 * (_sym(chain) + _sym(chain).T))
    assert 1 - np.sort(w)[-2] == pytest.approx(chain.gap, abs=1e-12)


def test_single_item_chain_mixes_in_one_step():
    d = joint_distribution(build([((1.0, 2.0, 3.0), (0.1, 0.2, 0.3))]))
    chain = glauber_chain(d)
    assert chain.gap == pytest.approx(1.0, abs=1e-12)
    curve = tv_curve(chain, 0, 3)
    assert curve[1] == pytest.approx(0.0, abs=1e-15)


def test_pm_j_chain_is_reversible():
    chain = glauber_chain(joint_distribution(pm_j(0.8)))
    P, pi = chain.transition, chain.stationary
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    flow = pi[:, None] * P
    assert np.abs(flow - flow.T).max() < 1e-10


def test_state_cap():
    with pytest.raises(StateSpaceTooLarge):
        glauber_chain(joint_distribution(product2()), cap=3)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_jacobi_matches_lapack(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    S = A + A.T
    w, U = jacobi_eigh(S)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(S), atol=1e-10)
    assert np.allclose(U @ np.diag(w) @ U.T, S, atol=1e-10)
    assert np.allclose(U.T @ U, np.eye(n), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**31), zeros=st.floats(0, 0.8))
def test_spectral_radius_matches_eigvals(n, seed, zeros):
    rng = np.random.default_rng(seed)
    M = rng.random((n, n)) * (rng.random((n, n)) >= zeros)
    rho, _ = spectral_radius(M)
    assert rho == pytest.approx(float(np.abs(np.linalg.eigvals(M)).max()), abs=1e-8)


def test_spectral_radius_periodic_matrix():
    M = np.array([[0.0, 2.0], [0.5, 0.0]])
    assert spectral_radius(M)[0] == pytest.approx(1.0, abs=1e-9)


def test_dobrushin_matrices():
    prod = product2(probs=((0.3, 0.7), (0.6, 0.4)))
    dm = d_dobrushin(prod, joint_distribution(prod), scales=[3.0, 1.0])
    assert dm.spectral_radius == 0 and not dm.entries.any()

    J = 0.5
    inst = pm_j(J)
    d = joint_distribution(inst)
    triv = d_dobrushin(inst, d)
    assert triv.spectral_radius == pytest.approx(math.tanh(J), abs=1e-9)
    w = d_dobrushin(inst, d, scales=[2.0, 1.0])
    assert w.entries[0, 1] == pytest.approx(2 * math.tanh(J))
    assert w.entries[1, 0] == pytest.approx(math.tanh(J) / 2)
    assert w.spectral_radius == pytest.approx(math.tanh(J), abs=1e-9)
    with pytest.raises(NonPositiveScale):
        d_dobrushin(inst, d, scales=[1.0, 0.0])


def test_gap_inequality_pm_j():
    J = 0.9
    d = joint_distribution(pm_j(J))
    chain = glauber_chain(d)
    assert 2 * chain.gap >= 1 - math.tanh(J) - 1e-12
    assert verify_gap_inequality(chain, [d_dobrushin(pm_j(J), d)]).passed


@pytest.mark.parametrize("index", range(100))
def test_gap_inequality_random(index):
    inst = random_instance(101, index)
    d = joint_distribution(inst)
    chain = glauber_chain(d)
    rng = np.random.default_rng(index)
    scales = rng.uniform(0.2, 5.0, inst.n)
    mats = [d_dobrushin(inst, d), d_dobrushin(inst, d, scales=scales)]
    assert verify_gap_inequality(chain, mats).passed
    # rho is invariant under v -> c v
    scaled = d_dobrushin(inst, d, scales=7.5 * scales)
    assert scaled.spectral_radius == pytest.approx(mats[1].spectral_radius, abs=1e-9)
    # gamma from the eigensolver against random Rayleigh quotients
    pi = chain.stationary
    pos = pi > 0
    S = _sym(chain)[np.ix_(pos, pos)]
    S = 0.5 * (S + S.T)
    s = np.sqrt(pi[pos])
    lam2 = 1 - chain.gap
    for _ in range(50):
        x = rng.normal(size=s.size)
        x -= (x @ s) * s
        nx = x @ x
        if nx > 1e-20:
            assert x @ S @ x / nx <= lam2 + 1e-6


def test_tv_curve_matches_matrix_powers():
    chain = glauber_chain(joint_distribution(product2(probs=((0.3, 0.7), (0.6, 0.4)))))
    curve = tv_curve(chain, 0, 12)
    P = chain.transition
    for k in (0, 1, 5, 12):
        mu = np.linalg.matrix_power(P, k)[0]
        assert curve[k] == pytest.approx(0.5 * np.abs(mu - chain.stationary).sum(), abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), index=st.integers(0, 40))
def test_tv_curve_nonincreasing(seed, index):
    chain = glauber_chain(joint_distribution(random_instance(seed, index)))
    curve = tv_curve(chain, 0, 300)
    assert np.all(np.diff(curve) <= 1e-10)
    assert curve[-1] < 1e-3


def test_sampling_is_deterministic():
    chain = glauber_chain(joint_distribution(pm_j(0.3)))
    a = sample_chain(chain, 42, 200, 0)
    b = sample_chain(chain, 42, 200, 0)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, sample_chain(chain, 43, 200, 0))
