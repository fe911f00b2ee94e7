"""Acceptance criteria, one test per criterion.

Each test records a single pass/fail line (shown in the terminal summary).
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest

from lsicert.coupling import certify_lsi
from lsicert.dynamics import GlauberChain, SpinConfiguration, loglog_slope, relaxation_study
from lsicert.goe import sk_certification_sweep
from lsicert.oracle import duplication_inequality_check, enumerate_gibbs, mixture_identity_check, ordering_chain
from lsicert.renorm import gaussian_identity_check, hessian_lower_bound_check, standard_psi_grid
from lsicert.rng import derived_seed
from lsicert.singlespin import SingleSpinModel, standard_field_grid, tilted_moments, variance_bound_check

from .conftest import random_symmetric

pytestmark = pytest.mark.acceptance

SEED = 20180131


def scaled_to_span(a: np.ndarray, span: float) -> np.ndarray:
    w = np.linalg.eigvalsh(a)
    return a * (span / (w[-1] - w[0]))


def test_criterion_1_certificate_formula(record_criterion):
    worst = 0.0
    values = {}
    for c in (0.0, 0.2, 0.5, 0.8):
        cert = certify_lsi(np.array([[0.0, c / 2], [c / 2, 0.0]]), 1, 4.0)
        expected = 0.5 * (1 + 2 * c / (1 - c))
        values[c] = cert.certified_constant
        worst = max(worst, abs(cert.certified_constant - expected))
    passed = worst <= 1e-12 and abs(values[0.8] - 4.5) <= 1e-12
    record_criterion(1, "certificate formula", passed, f"max |C - expected| = {worst:.2e}, C(0.8) = {float(values[0.8])!r}")
    assert passed


def test_criterion_2_variance_bound(record_criterion):
    t0 = time.perf_counter()
    reports = {}
    for n in (1, 2, 3):
        model = SingleSpinModel.sphere(n)
        reports[n] = variance_bound_check(model, standard_field_grid(n), tol=1e-8)
    cov0 = tilted_moments(SingleSpinModel.sphere(3), np.zeros(3)).covariance
    dev0 = float(np.max(np.abs(np.linalg.eigvalsh(cov0) - 1 / 3)))
    elapsed = time.perf_counter() - t0
    passed = all(r.pass_ for r in reports.values()) and dev0 <= 1e-10 and elapsed < 5
    detail = ", ".join(f"n={n} max var {r.max_directional_variance:.6f} <= {r.bound:.6f}" for n, r in reports.items())
    record_criterion(2, "variance bound", passed, f"{detail}; n=3 h=0 dev {dev0:.1e}; {elapsed:.2f}s")
    assert passed


def test_criterion_3_bakry_emery(record_criterion):
    t0 = time.perf_counter()
    parts, passed = [], True
    for n in (1, 3):
        model = SingleSpinModel.sphere(n)
        for c in (0.5, 0.9 * n):
            rep = hessian_lower_bound_check(model, c, standard_psi_grid(n), tol=1e-8)
            ok = rep.pass_ and rep.max_fd_deviation <= 1e-5
            passed = passed and ok
            parts.append(f"n={n} c={c:g} min {rep.min_eig_hess:.6f} >= {rep.lambda_be:.6f} fd {rep.max_fd_deviation:.1e}")
    elapsed = time.perf_counter() - t0
    passed = passed and elapsed < 30
    record_criterion(3, "Bakry-Emery bound", passed, "; ".join(parts) + f"; {elapsed:.2f}s")
    assert passed


def test_criterion_4_gaussian_identity(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(10):
        size = int(rng.integers(2, 9))
        c = 1.0
        a = random_symmetric(rng, size, 1.0, zero_diag=False)
        w = np.linalg.eigvalsh(a)
        # admissible: spectrum inside (0, c)
        a = (a - w[0] * np.eye(size)) * (0.8 * c / (w[-1] - w[0])) + 0.1 * c * np.eye(size)
        sigma = rng.choice([-1.0, 1.0], size=(20, size))
        worst = max(worst, gaussian_identity_check(a, c, list(sigma), tol=1e-9).max_log_ratio_deviation)
    elapsed = time.perf_counter() - t0
    passed = worst < 1e-9 and elapsed < 10
    record_criterion(4, "Gaussian convolution identity", passed, f"max spread {worst:.2e}; {elapsed:.2f}s")
    assert passed


def test_criterion_5_ordering_chain(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 5)
    failures, margins = [], []
    for k in range(25):
        size = 2 + k % 7
        a = scaled_to_span(random_symmetric(rng, size), float(rng.uniform(0.05, 0.95)))
        rep = ordering_chain(a, gamma=4.0, restarts=20, seed=k, slack=1e-6)
        if rep.rho_cert is None or not rep.holds:
            failures.append(k)
        else:
            margins.append(rep.rho_hat - rep.rho_cert)
    elapsed = time.perf_counter() - t0
    passed = not failures and elapsed < 300
    detail = f"{25 - len(failures)}/25 hold; min rho_hat - rho_cert {min(margins, default=float('nan')):.3f}; {elapsed:.1f}s"
    record_criterion(5, "oracle ordering chain", passed, detail)
    assert passed


def test_criterion_6_mixture_identity(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 6)
    worst, checks, passed = 0.0, 0, True
    for k, size in enumerate((2, 3, 3, 4, 4)):
        a = scaled_to_span(random_symmetric(rng, size), float(rng.uniform(0.3, 0.9)))
        rep = mixture_identity_check(a, count=100_000, seed=derived_seed(SEED, "mixture", k) % 2**32, z_max=3.0)
        passed = passed and rep.pass_
        worst = max(worst, max(r["z"] for r in rep.rows))
        checks += len(rep.rows)
    elapsed = time.perf_counter() - t0
    passed = passed and elapsed < 120
    record_criterion(6, "mixture identity", passed, f"{checks} observables, max |z| = {worst:.2f}; {elapsed:.1f}s")
    assert passed


def test_criterion_7_sk_corollary(record_criterion):
    t0 = time.perf_counter()
    res = sk_certification_sweep([0.2, 0.3], [400], samples_per_cell=100, seed=SEED)
    low, high = res.cell(0.2, 400), res.cell(0.3, 400)
    span = low.mean_edge_span
    elapsed = time.perf_counter() - t0
    passed = (
        low.certified_fraction >= 0.95
        and high.certified_fraction <= 0.05
        and abs(span - 4.0) <= 0.15
        and elapsed < 600
    )
    detail = (
        f"fraction {low.certified_fraction:.2f} at beta=0.2, {high.certified_fraction:.2f} at beta=0.3; "
        f"mean span {span:.4f}; {elapsed:.1f}s"
    )
    record_criterion(7, "SK certification at N=400", passed, detail)
    assert passed


def test_criterion_8_dynamics(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 8)
    a = random_symmetric(rng, 4, 0.5)
    sweeps = 1_000_000
    chain = GlauberChain(a, SpinConfiguration(np.ones(4)), seed=SEED)
    hist = chain.run(sweeps, track_histogram=True).histogram / sweeps
    tv = 0.5 * float(np.abs(hist - enumerate_gibbs(a).probabilities).sum())

    seeds = [derived_seed(SEED, "chain", i) for i in range(4)]
    table = relaxation_study("sk", [32, 64, 128], [0.2], seeds, sweeps=20000, workers=1)
    slopes = {obs: loglog_slope(table, obs, seed=SEED) for obs in ("magnetization", "energy")}
    elapsed = time.perf_counter() - t0
    passed = tv < 0.01 and all(-0.2 <= s <= 0.2 for s, _ in slopes.values()) and elapsed < 600
    detail = f"TV {tv:.4f}; " + ", ".join(
        f"{obs} slope {s:+.3f} +/- {se:.3f}" for obs, (s, se) in slopes.items()
    ) + f"; {elapsed:.1f}s"
    record_criterion(8, "dynamics sanity", passed, detail)
    assert passed


def test_criterion_9_duplication(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 9)
    fields = rng.normal(scale=2.0, size=20)
    functions = rng.normal(size=(1000, 2)) * np.exp(rng.normal(size=(1000, 1)))
    rep = duplication_inequality_check(fields, functions)
    elapsed = time.perf_counter() - t0
    passed = rep.checks == 20_000 and rep.violations == 0 and elapsed < 5
    record_criterion(9, "duplication inequality", passed, f"{rep.violations} violations in {rep.checks}; {elapsed:.2f}s")
    assert passed
