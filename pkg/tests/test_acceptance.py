"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""

from __future__ import annotations

import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np

from ijvar import analytic
from ijvar.bootstrap_exact import exact_report, exact_reports_batch
from ijvar.core import RandomnessPolicy, Sample
from ijvar.hdecomp import decompose, expected_estimator
from ijvar.kernels import get_kernel
from ijvar.laws import DiscreteDistribution, NormalLaw
from ijvar.simharness import ExperimentSpec, run_batch
from ijvar.ustat import coefficient_tables, ustat_estimates_batch

WORKERS = max(2, min(4, os.cpu_count() or 1))
THREE_POINT = {"law": "discrete", "support": [0.0, 1.0, 3.0], "probs": [0.3, 0.5, 0.2]}


def summary(result, estimator, **point):
    for row in result.rows:
        if row["kind"] == "summary" and row["estimator"] == estimator and all(row[k] == v for k, v in point.items()):
            return row
    raise KeyError(estimator)


def reference(result, name, **point):
    for row in result.rows:
        if row["kind"] == "reference" and row["estimator"] == name and all(row[k] == v for k, v in point.items()):
            return row["value"]
    raise KeyError(name)


def test_c01_exact_equivalence(acceptance):
    t0 = time.perf_counter()
    gen = RandomnessPolicy(101).generator("c01")
    worst = 0.0
    for i in range(20):
        n = (3, 4, 5, 6)[i % 4]
        x = gen.normal(size=n)
        for name in ("mean", "variance", "max", "median"):
            worst = max(worst, exact_report(Sample(x), get_kernel(name)).max_gap)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 5
    acceptance.record(1, "exact IJ_B = JK_B = Var(l*)", ok, f"max gap {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_c02_mean_example(acceptance):
    t0 = time.perf_counter()
    exact_ok = all(analytic.mean_example(n, 1.0).ratio_exact == Fraction(n - 1, n) for n in range(2, 50))
    n, R = 5, 10_000
    X = NormalLaw(0.0, 1.0).sample((R, n), RandomnessPolicy(102).generator("c02"))
    vl = exact_reports_batch(X, get_kernel("mean"))["var_l"]
    target = (n - 1) / n**2
    se = vl.std(ddof=1) / np.sqrt(R)
    z = (vl.mean() - target) / se
    elapsed = time.perf_counter() - t0
    ok = exact_ok and abs(z) < 3 and elapsed < 30
    acceptance.record(2, "mean example ratio (n-1)/n", ok, f"E[Var_l] {vl.mean():.5f} vs {target:.5f} ({z:+.2f} SE), {elapsed:.1f} s")
    assert ok


def test_c03_variance_expansions(acceptance):
    parts, ok = [], True
    for n in (100, 1000):
        c = analytic.variance_coefficients(n)
        da = c["a_prime"] / c["a"] - (1 + 1 / n)
        db = c["b_prime"] / c["b"] - (1 - 5 / n)
        ok &= abs(da) < 5 / n**2 and abs(db) < 40 / n**2
        parts.append(f"n={n}: {da:+.2e} (<{5 / n**2:.0e}), {db:+.2e} (<{40 / n**2:.0e})")
    acceptance.record(3, "variance example expansions", ok, "; ".join(parts))
    assert ok


def test_c04_max_limit(acceptance):
    r1000 = analytic.max_example(1000).ratio
    r2000 = analytic.max_example(2000).ratio
    ok = 0.235 <= r1000 <= 0.255 and abs(r1000 - r2000) < 0.005
    acceptance.record(4, "max example limit", ok, f"ratio(1000) {r1000:.4f}, ratio(2000) {r2000:.4f}")
    assert ok


def test_c05_bias_correction(acceptance):
    t0 = time.perf_counter()
    specs = [ExperimentSpec.from_dict({"id": t, "template": t, "n": [100], "B": [100], "replications": 500, "seed": 105})
             for t in ("fig1", "fig3")]
    results = run_batch(specs, WORKERS)
    elapsed = time.perf_counter() - t0
    ok, parts = elapsed < 300, []
    for res, truth in zip(results, (0.01, 0.02)):
        ij = summary(res, "sigma2_ij")["median"]
        mc = summary(res, "ij_mc")["median"]
        whe = summary(res, "ij_whe")["median"]
        ok &= ij > 1.2 * truth and abs(mc - truth) < 0.2 * truth and abs(whe - truth) < 0.2 * truth
        parts.append(f"{res.spec.statistic}: IJ {ij:.4f}, mc {mc:.4f}, whe {whe:.4f} (truth {truth})")
    acceptance.record(5, "bias-corrected IJ at B=100", ok, "; ".join(parts) + f"; {elapsed:.0f} s")
    assert ok


def test_c06_max_underestimation(acceptance):
    spec = ExperimentSpec.from_dict({"id": "fig6", "template": "fig6", "n": [100], "B": [1000], "seed": 106})
    (res,) = run_batch([spec], WORKERS)
    truth = reference(res, "var_smoothed")
    meds = {e: summary(res, e)["median"] for e in ("sigma2_ij", "ij_mc", "ij_whe")}
    ok = all(m < 0.6 * truth for m in meds.values())
    detail = ", ".join(f"{k} {v:.2e}" for k, v in meds.items()) + f" vs 0.6 x {truth:.3e}"
    acceptance.record(6, "max statistic underestimation at B=1000", ok, detail)
    assert ok


def test_c07_ustat_expectations(acceptance):
    t0 = time.perf_counter()
    specs = [
        ExperimentSpec.from_dict({"id": f"{name}-{n}-{k}", "template": "ustat-expectation", "statistic": name,
                                  "law": THREE_POINT, "n": [n], "k": [k], "replications": 2000, "seed": 107})
        for (n, k) in ((8, 2), (8, 3), (10, 3)) for name in ("mean", "max", "product")
    ]
    results = run_batch(specs, WORKERS)
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for res in results:
        for est, ref in (("ij_u", "E_ij_u"), ("ps_ij_u", "E_ps_ij_u")):
            row = summary(res, est)
            z = (row["mean"] - reference(res, ref)) / (row["sd"] / np.sqrt(res.spec.replications))
            worst = max(worst, abs(z))
    ok = worst < 3 and elapsed < 600
    acceptance.record(7, "E[IJ_U] and E[ps-IJ_U] closed forms", ok, f"worst |z| {worst:.2f} over 18 checks, {elapsed:.1f} s")
    assert ok


def test_c08_higher_order(acceptance):
    ct = coefficient_tables(20, 10, 4)
    monotone = bool(np.all(np.diff(ct.r_d, axis=0) > 0))
    law = DiscreteDistribution(THREE_POINT["support"], THREE_POINT["probs"])
    n, k, R = 10, 3, 4000
    kern = get_kernel("mean", k)
    X = law.sample((R, n), RandomnessPolicy(108).generator("c08"))
    vals = ustat_estimates_batch(X, kern, orders=(2,))["ps_ij_u_2"]
    expected = expected_estimator(coefficient_tables(n, k, 2), decompose(kern, law), "psIJ_U(d)", 2)
    z = (vals.mean() - expected) / (vals.std(ddof=1) / np.sqrt(R))
    ok = monotone and abs(z) < 3
    acceptance.record(8, "order-d coefficients", ok, f"r_j(d) monotone: {monotone}; ps-IJ_U(2) {vals.mean():.3e} vs {expected:.3e} ({z:+.2f} SE)")
    assert ok


def test_c09_consistency_trend(acceptance):
    t0 = time.perf_counter()
    spec = ExperimentSpec.from_dict({"id": "trend", "template": "consistency-trend", "replications": 200, "seed": 109})
    (res,) = run_batch([spec], WORKERS)
    elapsed = time.perf_counter() - t0
    meds = [summary(res, "abs_dev", n=n)["median"] for n in (100, 200, 400, 800)]
    ok = all(b < a for a, b in zip(meds, meds[1:])) and meds[-1] < 0.15 and elapsed < 600
    acceptance.record(9, "ps-IJ consistency trend", ok, "medians " + ", ".join(f"{m:.3f}" for m in meds) + f"; {elapsed:.0f} s")
    assert ok


def test_c10_coverage(acceptance):
    spec = ExperimentSpec.from_dict({"id": "coverage", "template": "coverage", "n": [500], "k": [10], "N": [20000],
                                     "level": 0.95, "replications": 1000, "seed": 110})
    (res,) = run_batch([spec], WORKERS)
    cover = summary(res, "covered")["mean"]
    ok = 0.93 <= cover <= 0.97
    acceptance.record(10, "incomplete U interval coverage", ok, f"coverage {cover:.3f} over 1000 replications")
    assert ok


CONFIG = """\
schema_version = 1
seed = 111

[[experiment]]
id = "fig1"
template = "fig1"
n = [30]
B = [20, 40]
replications = 60

[[experiment]]
id = "fig7"
template = "fig7"

[[experiment]]
id = "coverage"
template = "coverage"
n = [60]
k = [3]
N = [500]
replications = 60

[[experiment]]
id = "stump-expectation"
template = "ustat-expectation"
statistic = "max"
n = [8]
k = [3]
replications = 100

[[experiment]]
id = "rho"
template = "rho-diagnostic"
n = [5]
replications = 200
"""


def test_c11_determinism(acceptance, tmp_path):
    cfg = tmp_path / "config.toml"
    cfg.write_text(CONFIG)
    dirs = {}
    for workers in (1, 3):
        out = tmp_path / f"w{workers}"
        proc = subprocess.run([sys.executable, "-m", "ijvar", "simulate", str(cfg), "--out", str(out),
                               "--workers", str(workers)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        dirs[workers] = out
    replay = tmp_path / "replay"
    proc = subprocess.run([sys.executable, "-m", "ijvar", "simulate", str(dirs[1] / "manifest.json"), "--out",
                           str(replay), "--workers", "2"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    names = sorted(p.name for p in dirs[1].iterdir() if p.suffix == ".csv")
    same = all((dirs[1] / f).read_bytes() == (dirs[3] / f).read_bytes() == (replay / f).read_bytes() for f in names)
    same &= (dirs[1] / "manifest.json").read_bytes() == (dirs[3] / "manifest.json").read_bytes()
    ok = same and len(names) == 5
    acceptance.record(11, "byte-identical results across worker counts", ok, f"{len(names)} result files, workers 1/3 and manifest replay")
    assert ok
