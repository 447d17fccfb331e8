from __future__ import annotations

import math

import numpy as np
import pytest

from ijvar.bootstrap_exact import exact_report
from ijvar.bootstrap_mc import (
    BootstrapRun,
    estimate_all,
    exact_mc_bias_terms,
    mc_bias_decomposition,
    run_bootstrap,
)
from ijvar.core import DomainError, RandomnessPolicy, Sample
from ijvar.kernels import get_kernel


def test_run_is_reproducible(rng):
    s = Sample(rng.normal(size=20))
    pol = RandomnessPolicy(4)
    a = run_bootstrap(s, get_kernel("mean"), 50, pol, "b", 3)
    b = run_bootstrap(s, get_kernel("mean"), 50, pol, "b", 3)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    assert a.B == 50 and a.n == 20
    assert np.all(a.weights.sum(axis=1) == 20)
    np.testing.assert_allclose(a.estimates, a.weights @ s.values / 20, rtol=1e-12)


def test_estimators_against_direct_formulas(rng):
    x = rng.normal(size=8)
    run = run_bootstrap(Sample(x), get_kernel("median"), 40, rng)
    est = estimate_all(run)
    s, W = run.estimates, run.weights.astype(float)
    cov = np.array([np.cov(s, W[:, j])[0, 1] for j in range(8)])
    np.testing.assert_allclose(est.covhat, cov, rtol=1e-10, atol=1e-15)
    assert est.sigma2_ij == pytest.approx(np.sum(cov**2), rel=1e-10)
    corr = sum(np.var((s - s.mean()) * (W[:, j] - W[:, j].mean()), ddof=1) for j in range(8)) / 40
    assert est.ij_mc == pytest.approx(est.sigma2_ij - corr, rel=1e-10)
    assert est.ij_whe == pytest.approx(est.sigma2_ij - 8 / 40 * np.var(s, ddof=1), rel=1e-10)
    assert est.ij_mc_clamped == max(est.ij_mc, 0.0)
    # OLS fitted values reproduce the statistic exactly for the mean
    run_m = run_bootstrap(Sample(x), get_kernel("mean"), 40, rng)
    assert estimate_all(run_m).sigma2_ols == pytest.approx(np.var(run_m.estimates), rel=1e-9)


def test_jackknife_missing_column():
    W = np.array([[2, 0, 1], [1, 0, 2], [3, 0, 0]])
    run = BootstrapRun(estimates=np.array([1.0, 2.0, 0.5]), weights=W)
    est = estimate_all(run)
    assert math.isnan(est.sigma2_jk) and est.jk_missing == 1


def test_errors(rng):
    with pytest.raises(DomainError):
        run_bootstrap(Sample([1.0, 2.0]), get_kernel("mean"), 1, rng)
    with pytest.raises(DomainError):
        run_bootstrap(Sample([1.0, 2.0]), get_kernel("stump", 2), 10, rng)


def test_jk_converges_to_exact(rng):
    x = rng.normal(size=5)
    rep = exact_report(Sample(x), get_kernel("variance"))
    est = estimate_all(run_bootstrap(Sample(x), get_kernel("variance"), 200_000, rng))
    assert est.sigma2_ij == pytest.approx(rep.ij_b, rel=0.05)
    assert est.sigma2_jk == pytest.approx(rep.jk_b, rel=0.05)


def test_bias_terms_match_simulation():
    x = np.array([0.3, -1.2, 0.8, 2.0, -0.4])
    t = mc_bias_decomposition(Sample(x), get_kernel("mean"), 50, 2000, RandomnessPolicy(21), "bias")
    I, II = exact_mc_bias_terms(Sample(x), get_kernel("mean"), 50)
    assert t.theoretical_bias == pytest.approx(I + II)
    assert abs(t.empirical_bias - t.theoretical_bias) < 3 * t.empirical_bias_se
    assert abs(t.centered_bias - t.theoretical_bias) < 3 * t.centered_bias_se
    # the bias shrinks like 1/B
    I2, II2 = exact_mc_bias_terms(Sample(x), get_kernel("mean"), 500)
    assert (I2 + II2) == pytest.approx((I + II) / 10, rel=0.02)
