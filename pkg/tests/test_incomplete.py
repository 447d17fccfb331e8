from __future__ import annotations

import math

import numpy as np
import pytest

from ijvar.core import DomainError, RandomnessPolicy, Sample
from ijvar.incomplete import (
    VarianceEstimate,
    analyze,
    confidence_interval,
    covariance_form,
    draw_incomplete,
    ps_ij_hat,
    z_quantile,
    zeta_k_hat,
)
from ijvar.kernels import get_kernel
from ijvar.ustat import complete_ustat_report


def test_full_selection_equals_complete(rng):
    x = rng.normal(size=9)
    kern = get_kernel("max", 3)
    M = math.comb(9, 3)
    run = draw_incomplete(Sample(x), kern, M, rng)
    assert run.exhaustive and run.N_hat == M
    rep = complete_ustat_report(Sample(x), kern)
    assert run.point_estimate() == pytest.approx(rep.u_value)
    assert ps_ij_hat(run).ps_ij_hat == pytest.approx(rep.ps_ij_u, rel=1e-12)
    # Cov(s, w_i) = (k/n)(e_i - s0), so the squared covariances sum to ps-IJ_U
    assert covariance_form(run) == pytest.approx(rep.ps_ij_u, rel=1e-10)


def test_thinning_count(rng):
    x = rng.normal(size=20)
    N = 3000
    counts = [draw_incomplete(Sample(x), get_kernel("mean", 4), N, RandomnessPolicy(1), "t", r).N_hat for r in range(40)]
    M = math.comb(20, 4)
    sd = math.sqrt(N * (1 - N / M))
    assert abs(np.mean(counts) - N) < 4 * sd / math.sqrt(40)


def test_large_population_branch(rng):
    x = rng.normal(size=60)
    run = draw_incomplete(Sample(x), get_kernel("mean", 10), 2000, RandomnessPolicy(3), "big")
    assert not run.exhaustive
    assert abs(run.N_hat - 2000) < 5 * math.sqrt(2000)
    assert np.all(np.diff(run.masks, axis=1) > 0)
    assert run.collisions == 0
    np.testing.assert_allclose(run.values, x[run.masks].mean(axis=1))
    again = draw_incomplete(Sample(x), get_kernel("mean", 10), 2000, RandomnessPolicy(3), "big")
    np.testing.assert_array_equal(run.masks, again.masks)


def test_normalisations(rng):
    x = rng.normal(size=12)
    run = draw_incomplete(Sample(x), get_kernel("mean", 3), 100, rng)
    a, b = ps_ij_hat(run), ps_ij_hat(run, normalize="realized")
    if run.N_hat != 100:
        assert a.ps_ij_hat != b.ps_ij_hat
    assert a.zeta1_scaled == pytest.approx((12 / 9) ** 2 * a.ps_ij_hat)
    with pytest.raises(DomainError):
        ps_ij_hat(run, normalize="other")


def test_zeta_k_hat():
    x = RandomnessPolicy(8).generator("z").normal(size=4000)
    z = zeta_k_hat(Sample(x), get_kernel("mean", 5), partitions=5, rng=RandomnessPolicy(8))
    assert z == pytest.approx(1 / 5, rel=0.1)
    with pytest.raises(DomainError):
        zeta_k_hat(Sample(x[:9]), get_kernel("mean", 5))


def test_regimes_and_interval():
    est = VarianceEstimate(0.01, 0.02, 100, 5, 50, zeta_k_hat=0.5)
    assert est.regime_variance("N>>n/k") == (0.02, "N>>n/k")
    assert est.regime_variance("N<<n/k") == (0.01, "N<<n/k")
    assert est.regime_variance("N~n/k")[0] == pytest.approx(0.03)
    # r = 0.5 / (50 * 0.02) = 0.5 lies between the thresholds
    assert est.regime_variance()[1] == "N~n/k"
    assert VarianceEstimate(0.01, 0.02, 100, 5, 10**6, zeta_k_hat=0.5).regime_variance()[1] == "N>>n/k"
    assert VarianceEstimate(0.01, 0.02, 100, 5, 1, zeta_k_hat=0.5).regime_variance()[1] == "N<<n/k"
    lo, hi = confidence_interval(1.0, est, 0.95, "N>>n/k")
    assert hi - 1.0 == pytest.approx(1.959963984540054 * math.sqrt(0.02))
    assert 1.0 - lo == pytest.approx(hi - 1.0)
    with pytest.raises(DomainError):
        VarianceEstimate(0.01, 0.02, 100, 5, 50).regime_variance("N<<n/k")
    with pytest.raises(DomainError):
        est.regime_variance("bogus")
    with pytest.raises(DomainError):
        z_quantile(1.0)


def test_analyze_stump_reproducible(rng):
    x = rng.normal(size=40)
    kern = get_kernel("stump", 6)
    a = analyze(Sample(x), kern, 500, 0.9, RandomnessPolicy(4), "s")
    b = analyze(Sample(x), kern, 500, 0.9, RandomnessPolicy(4), "s")
    assert a.interval == b.interval and a.regime in ("N<<n/k", "N~n/k", "N>>n/k")
    assert a.interval[0] < a.point < a.interval[1]


def test_errors(rng):
    s = Sample(rng.normal(size=10))
    with pytest.raises(DomainError):
        draw_incomplete(s, get_kernel("mean", 3), 0, rng)
    with pytest.raises(DomainError):
        draw_incomplete(s, get_kernel("mean", 3), 10**6, rng)
    with pytest.raises(DomainError):
        draw_incomplete(s, get_kernel("mean"), 5, rng)
    with pytest.raises(DomainError):
        draw_incomplete(s, get_kernel("mean", 10), 1, rng)
