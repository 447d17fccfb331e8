"""Finite-B bootstrap variance estimators and their Monte Carlo bias corrections."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bootstrap_exact import _expansion_index, _tables, exact_report
from .core import DomainError, Kernel, Sample, as_generator, require_no_omega


@dataclass(frozen=True)
class BootstrapRun:
    """B resamples of one dataset: estimates ``s_b`` and weight counts ``w_bj``."""

    estimates: np.ndarray
    weights: np.ndarray

    @property
    def B(self) -> int:
        return int(self.estimates.size)

    @property
    def n(self) -> int:
        return int(self.weights.shape[1])

    @property
    def bagged(self) -> float:
        return float(self.estimates.mean())


@dataclass(frozen=True)
class McEstimates:
    sigma2_ij: float
    sigma2_jk: float  # NaN when some observation was never drawn
    sigma2_ols: float
    ij_mc: float
    ij_whe: float
    covhat: np.ndarray
    jk_missing: int = 0

    @property
    def ij_mc_clamped(self) -> float:
        return max(self.ij_mc, 0.0)

    @property
    def ij_whe_clamped(self) -> float:
        return max(self.ij_whe, 0.0)

    def as_dict(self) -> dict[str, float]:
        return {
            "sigma2_ij": self.sigma2_ij,
            "sigma2_jk": self.sigma2_jk,
            "sigma2_ols": self.sigma2_ols,
            "ij_mc": self.ij_mc,
            "ij_whe": self.ij_whe,
            "ij_mc_clamped": self.ij_mc_clamped,
            "ij_whe_clamped": self.ij_whe_clamped,
        }


def draw_weights(n: int, B: int, gen: np.random.Generator) -> np.ndarray:
    """B rows of Multinomial(n; 1/n, ..., 1/n) counts."""
    return gen.multinomial(n, np.full(n, 1.0 / n), size=B).astype(np.int64)


def run_bootstrap(
    sample: Sample,
    statistic: Kernel,
    B: int,
    rng=None,
    experiment: str = "bootstrap",
    replicate: int = 0,
) -> BootstrapRun:
    """Draw B bootstrap resamples and evaluate the statistic on each."""
    if B < 2:
        raise DomainError(f"B must be at least 2 for sample covariances, got {B}")
    require_no_omega(statistic, "the bootstrap")
    if statistic.arity is not None and statistic.arity != sample.n:
        raise DomainError(f"statistic arity {statistic.arity} does not match n = {sample.n}")
    gen = as_generator(rng, experiment, replicate)
    W = draw_weights(sample.n, int(B), gen)
    s = statistic.evaluate(sample.values[_expansion_index(W)])
    return BootstrapRun(estimates=s, weights=W)


def estimate_all(run: BootstrapRun, mc_ddof: int = 1) -> McEstimates:
    """All five finite-B estimators from one bootstrap run.

    ``mc_ddof`` sets the normalisation of the sample variances inside the
    ``ij_mc`` correction (1 gives 1/(B-1), matching the covariance estimate).
    """
    s = np.asarray(run.estimates, dtype=np.float64)
    W = np.asarray(run.weights, dtype=np.float64)
    B, n = W.shape
    sc = s - s.mean()
    Wc = W - W.mean(axis=0)
    covhat = (sc @ Wc) / (B - 1)
    sigma2_ij = float(np.sum(covhat**2))

    colsum = W.sum(axis=0)
    missing = int(np.sum(colsum == 0))
    if missing:
        sigma2_jk = math.nan
    else:
        coef = W / colsum - 1.0 / B
        sigma2_jk = float(np.sum((s @ coef) ** 2))

    beta, *_ = np.linalg.lstsq(Wc, sc, rcond=None)
    fitted = Wc @ beta
    sigma2_ols = float(np.mean((fitted - fitted.mean()) ** 2))

    prod = sc[:, None] * Wc
    correction = float(np.sum(prod.var(axis=0, ddof=mc_ddof))) / B
    ij_mc = sigma2_ij - correction
    ij_whe = sigma2_ij - n / B * float(s.var(ddof=1))
    return McEstimates(sigma2_ij, sigma2_jk, sigma2_ols, ij_mc, ij_whe, covhat, missing)


@dataclass(frozen=True)
class McBiasTable:
    B: int
    replications: int
    ij_b: float
    mean_sigma2_ij: float
    empirical_bias: float
    empirical_bias_se: float
    centered_bias: float
    centered_bias_se: float
    term_I: float
    term_II: float

    @property
    def theoretical_bias(self) -> float:
        return self.term_I + self.term_II


def exact_mc_bias_terms(sample: Sample, statistic: Kernel, B: int) -> tuple[float, float]:
    """Exact terms I and II of the Monte Carlo bias, summed over observations.

    Their sum equals ``sum_j Var_*(Cov_j estimate)`` exactly for the
    1/(B-1) sample covariance.
    """
    n = sample.n
    W, p, idx, _, _ = _tables(n)
    s = statistic.evaluate(sample.values[idx])
    s_mean = float(p @ s)
    var_s = float(p @ (s - s_mean) ** 2)
    term_I = 0.0
    term_II = 0.0
    for j in range(n):
        w = W[:, j].astype(np.float64)
        w_mean = float(p @ w)
        prod = (s - s_mean) * (w - w_mean)
        cov = float(p @ prod)
        var_w = float(p @ (w - w_mean) ** 2)
        term_I += float(p @ (prod - cov) ** 2) / B
        term_II += (var_s * var_w + cov**2) / (B * (B - 1))
    return term_I, term_II


def mc_bias_decomposition(
    sample: Sample,
    statistic: Kernel,
    B: int,
    replications: int,
    rng=None,
    experiment: str = "mc-bias",
) -> McBiasTable:
    """Empirical Monte Carlo bias of the IJ estimate against its exact terms.

    ``empirical_bias`` is ``mean(sigma2_ij) - IJ_B``.  ``centered_bias`` is the
    mean of ``sum_j (Cov_j estimate - Cov_j)^2``, which has the same
    expectation but far less spread, so slopes over B can be read from it.
    """
    if replications < 2:
        raise DomainError("need at least 2 replications")
    report = exact_report(sample, statistic)
    vals = np.empty(replications)
    centered = np.empty(replications)
    for r in range(replications):
        run = run_bootstrap(sample, statistic, B, rng, experiment, r)
        est = estimate_all(run)
        vals[r] = est.sigma2_ij
        centered[r] = np.sum((est.covhat - report.cov) ** 2)
    term_I, term_II = exact_mc_bias_terms(sample, statistic, B)
    root = math.sqrt(replications)
    return McBiasTable(
        B=B,
        replications=replications,
        ij_b=report.ij_b,
        mean_sigma2_ij=float(vals.mean()),
        empirical_bias=float(vals.mean() - report.ij_b),
        empirical_bias_se=float(vals.std(ddof=1) / root),
        centered_bias=float(centered.mean()),
        centered_bias_se=float(centered.std(ddof=1) / root),
        term_I=term_I,
        term_II=term_II,
    )
