import itertools
import math

import numpy as np
import pytest

from lsicert.coupling import certify_lsi
from lsicert.oracle import (
    OracleError,
    duplication_inequality_check,
    entropy,
    enumerate_gibbs,
    exact_observables,
    exact_spectral_gap,
    mixture_identity_check,
    numeric_lsi_upper_bound,
    ordering_chain,
)

from .conftest import random_symmetric


def brute_gibbs(m):
    n = len(m)
    states = list(itertools.product([-1.0, 1.0], repeat=n))
    w = [math.exp(-0.5 * np.array(s) @ m @ np.array(s)) for s in states]
    z = sum(w)
    return {s: wi / z for s, wi in zip(states, w)}


def test_zero_coupling_uniform():
    for n in (1, 3):
        p = enumerate_gibbs(np.zeros((n, n))).probabilities
        np.testing.assert_allclose(p, 2.0**-n, rtol=1e-14)


def test_matches_brute_force(rng):
    m = random_symmetric(rng, 4, 1.0, zero_diag=False)
    chain = enumerate_gibbs(m)
    brute = brute_gibbs(m)
    for idx, s in enumerate(chain.states):
        assert chain.probabilities[idx] == pytest.approx(brute[tuple(s)], rel=1e-12)
    assert chain.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_two_site_same_sign_probability():
    a = 0.37
    chain = enumerate_gibbs(np.array([[0, a], [a, 0]]))
    same = chain.expectation((chain.states[:, 0] == chain.states[:, 1]).astype(float))
    assert same == pytest.approx(math.exp(-a) / (math.exp(-a) + math.exp(a)), rel=1e-14)


def test_size_limit():
    with pytest.raises(OracleError):
        enumerate_gibbs(np.zeros((17, 17)))


def test_dirichlet_matrix_structure(rng):
    chain = enumerate_gibbs(random_symmetric(rng, 3, 0.8))
    lmat = chain.dirichlet_form_matrix
    np.testing.assert_allclose(lmat, lmat.T)
    np.testing.assert_allclose(lmat @ np.ones(8), 0, atol=1e-15)
    assert np.min(np.linalg.eigvalsh(lmat)) > -1e-14
    f = rng.normal(size=8)
    # definition: sum_x sum_s nu(s) |f(s) - f(s^x)|^2
    direct = sum(
        chain.probabilities[i] * (f[i] - f[i ^ (1 << x)]) ** 2 for i in range(8) for x in range(3)
    )
    assert f @ lmat @ f == pytest.approx(direct, rel=1e-12)
    assert chain.dirichlet(f) == pytest.approx(direct, rel=1e-12)


def test_single_site_gap_by_rayleigh_quotients(rng):
    # two-state oracle: D(f)/var(f) for arbitrary nonconstant f
    chain = enumerate_gibbs(np.zeros((1, 1)))
    for _ in range(20):
        f = rng.normal(size=2)
        var = chain.expectation(f * f) - chain.expectation(f) ** 2
        assert chain.dirichlet(f) / var == pytest.approx(4.0, rel=1e-12)
    assert exact_spectral_gap(chain) == pytest.approx(4.0, rel=1e-12)


def test_gap_tensorizes():
    gaps = [exact_spectral_gap(enumerate_gibbs(np.zeros((n, n)))) for n in (1, 2, 3)]
    assert max(gaps) - min(gaps) < 1e-10


def test_gap_is_min_rayleigh_quotient(rng):
    chain = enumerate_gibbs(random_symmetric(rng, 3, 0.6))
    gap = chain.exact_gap
    p = chain.probabilities
    g = chain.gap_function
    var = p @ g**2 - (p @ g) ** 2
    assert chain.dirichlet(g) / var == pytest.approx(gap, rel=1e-9)
    for _ in range(200):
        f = rng.normal(size=8)
        assert chain.dirichlet(f) / (p @ f**2 - (p @ f) ** 2) >= gap - 1e-10


def test_lsi_search_single_site_grid_oracle():
    chain = enumerate_gibbs(np.zeros((1, 1)))
    # grid search over f = (1, t): the 2-dim problem up to scale
    ts = np.exp(np.linspace(-6, 6, 4001))
    ts = ts[np.abs(ts - 1) > 1e-4]
    grid = min(2 * chain.dirichlet(np.array([1.0, t])) / entropy(chain, np.array([1.0, t * t])) for t in ts)
    res = numeric_lsi_upper_bound(chain, restarts=10, seed=1)
    assert grid >= 4.0 - 1e-9 and grid == pytest.approx(4.0, abs=1e-3)
    assert res.rho_hat == pytest.approx(4.0, abs=1e-6)
    assert res.rho_hat >= certify_lsi(np.zeros((1, 1)), 1, 4.0).certified_lsi_rate - 1e-6


def test_entropy_definition(rng):
    chain = enumerate_gibbs(random_symmetric(rng, 2, 0.5))
    F = rng.uniform(0.1, 3.0, size=4)
    p = chain.probabilities
    direct = p @ (F * np.log(F)) - (p @ F) * math.log(p @ F)
    assert entropy(chain, F) == pytest.approx(direct, rel=1e-12)
    assert entropy(chain, np.full(4, 2.0)) == 0.0


def test_lsi_search_near_constant_accuracy(rng):
    chain = enumerate_gibbs(random_symmetric(rng, 3, 0.5))
    res = numeric_lsi_upper_bound(chain, restarts=5, seed=2)
    assert res.rho_hat <= res.gap_limit
    assert res.rho_descent == pytest.approx(res.gap_limit, rel=1e-3) or res.rho_descent < res.gap_limit


def test_ordering_chain_small_corpus(rng):
    for n in (2, 3, 4):
        m = random_symmetric(rng, n, 1.0)
        w = np.linalg.eigvalsh(m)
        m *= 0.7 / (w[-1] - w[0])
        rep = ordering_chain(m, restarts=8, seed=n)
        assert rep.holds and rep.rho_cert <= rep.rho_hat + 1e-6 <= rep.exact_gap + 2e-6


def test_duplication_trivial_cases():
    rep = duplication_inequality_check([0.0, 1.3], np.array([[2.0, 2.0], [-1.0, 1.0]]))
    assert rep.pass_ and rep.violations == 0
    assert rep.max_identity_error < 1e-14


def test_duplication_random(rng):
    rep = duplication_inequality_check(rng.normal(scale=2, size=20), rng.normal(size=(1000, 2)))
    assert rep.checks == 20_000 and rep.violations == 0 and rep.min_slack >= 0
    assert rep.max_derivative_error < 1e-8


def test_mixture_zero_coupling():
    rep = mixture_identity_check(np.zeros((2, 2)), count=20_000, seed=1)
    assert rep.pass_
    row = {r["observable"]: r for r in rep.rows}
    assert row["magnetization"]["exact"] == 0.0


def test_mixture_two_point():
    m = np.array([[0.0, 0.35], [0.35, 0.0]])
    rep = mixture_identity_check(m, count=50_000, seed=2)
    row = {r["observable"]: r for r in rep.rows}
    assert row["s0s1"]["exact"] == pytest.approx(exact_observables(enumerate_gibbs(m))["s0s1"])
    assert rep.pass_


def test_mixture_constant_observable():
    # F = 1: mu_phi(1) = 1 for every phi
    from lsicert.oracle import conditional_observables

    phi = np.random.default_rng(0).normal(size=(5, 3))
    t = conditional_observables(np.zeros((3, 3)), 0.7, phi)
    assert t["energy"].shape == (5,) and np.all(t["energy"] == 0.0)
