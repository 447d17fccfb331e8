"""Closed-form bias targets for the bagged mean, variance and maximum.

Each example returns ``Var(E_*[s*])`` (the variance of the bagged statistic)
and ``E[Var_*(l*)]`` (the expected exact IJ estimate).  For the variance and
maximum examples two forms are available: ``form="published"`` evaluates the
published displays verbatim, ``form="exact"`` evaluates the quantities
directly (central-moment algebra for the variance, order-statistic moments
for the maximum).  The two forms differ; see the README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bootstrap_exact import exact_reports_batch
from .core import BOOTSTRAP_ENUM_CAP, CapacityError, DomainError, Kernel, as_generator
from .laws import DiscreteDistribution, NormalLaw, UniformLaw

FORMS = ("published", "exact")


@dataclass(frozen=True)
class ExampleClosedForm:
    var_smoothed: float
    mean_var_l: float
    ratio: float
    ratio_exact: Fraction | None = None
    extra: dict | None = None


def _check_form(form: str) -> None:
    if form not in FORMS:
        raise DomainError(f"form must be one of {FORMS}, got {form!r}")


def mean_example(n: int, sigma2: float) -> ExampleClosedForm:
    """Bagged sample mean: ``sigma2/n`` and ``(n-1) sigma2 / n^2``."""
    if n < 2 or not sigma2 > 0:
        raise DomainError("mean example needs n >= 2 and sigma2 > 0")
    s2 = Fraction(sigma2)
    var_smoothed = s2 / n
    mean_var_l = (n - 1) * s2 / n**2
    ratio = mean_var_l / var_smoothed
    return ExampleClosedForm(float(var_smoothed), float(mean_var_l), float(ratio), ratio)


def variance_coefficients(n: int, form: str = "published") -> dict[str, float]:
    """``a_n, b_n`` and ``a_n', b_n'`` with Var = a mu4 - b mu2^2 and E[Var_l] = a' mu4 - b' mu2^2."""
    _check_form(form)
    if n < 4:
        raise DomainError("variance example needs n >= 4")
    lead = ((n - 1) / n) ** 2
    a = lead / n
    b = lead * (n - 3) / (n * (n - 1))
    if form == "published":
        a_p = lead * ((n**3 - (n - 1) ** 2) / (n**2 * (n - 1) ** 2) + n / (n - 1) ** 5)
        b_p = lead * ((n**2 - 2 * n + 3) / ((n - 1) * n**2) - 3 * n**2 * (2 * n - 3) / (n - 1) ** 5)
    else:
        a_p = (n - 2) ** 2 * (n - 1) / n**4
        b_p = (n - 6) * (n - 2) * (n - 1) / n**4
    return {"a": a, "b": b, "a_prime": a_p, "b_prime": b_p}


def variance_example(n: int, mu2: float, mu4: float, form: str = "published") -> ExampleClosedForm:
    """Bagged unbiased sample variance, in terms of the central moments mu2 and mu4."""
    if not (mu2 > 0 and mu4 >= mu2**2):
        raise DomainError("need mu2 > 0 and mu4 >= mu2^2")
    c = variance_coefficients(n, form)
    var_smoothed = c["a"] * mu4 - c["b"] * mu2**2
    mean_var_l = c["a_prime"] * mu4 - c["b_prime"] * mu2**2
    return ExampleClosedForm(var_smoothed, mean_var_l, mean_var_l / var_smoothed, extra=c)


def gaussian_variance_reference(n: int, sigma2: float) -> float:
    """Large-n variance of the bagged sample variance under normal data, ``2 sigma^4 / n``."""
    return 2.0 * sigma2**2 / n


def _pow_ratio(i: np.ndarray, n: int, e: int) -> np.ndarray:
    """``(i/n)^e`` in log space; zero at i = 0."""
    out = np.zeros(i.shape, dtype=np.float64)
    pos = i > 0
    out[pos] = np.exp(e * np.log(i[pos] / n))
    return out


def max_order_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``q_i = (i/n)^n`` for i = 0..n and ``p_i = q_i - q_{i-1}`` for i = 1..n."""
    q = _pow_ratio(np.arange(n + 1, dtype=np.float64), n, n)
    return q, np.diff(q)


def max_example(n: int, form: str = "published") -> ExampleClosedForm:
    """Bagged sample maximum of Uniform(0, 1) data."""
    _check_form(form)
    if n < 2:
        raise DomainError("max example needs n >= 2")
    j = np.arange(1, n + 1, dtype=np.float64)
    if form == "published":
        t = math.fsum(_pow_ratio(j - 1, n, n).tolist())
        var_smoothed = (n - t) * (1 + t) / ((n + 1) ** 2 * (n + 2))
        tail = _pow_ratio(j - 1, n, n - 1)  # index j-1 holds ((j-1)/n)^(n-1)
        # sum_{j=i+1}^n ((j-1)/n)^(n-1) for i = 1..n
        suffix = np.concatenate([np.cumsum(tail[::-1])[::-1][1:], [0.0]])
        mean_var_l = math.fsum(((t - suffix) ** 2).tolist()) / ((n + 1) * (n + 2))
    else:
        var_smoothed, mean_var_l = _max_exact(n)
    return ExampleClosedForm(var_smoothed, mean_var_l, mean_var_l / var_smoothed)


def _quad_forms(V: np.ndarray, n: int, kind: str) -> np.ndarray:
    """Row-wise ``v^T M v`` for the order-statistic moment matrices of n uniforms.

    ``kind="cov"``: M[a, b] = a (n + 1 - b) / ((n+1)^2 (n+2)) for a <= b.
    ``kind="second"``: M[a, b] = a (b + 1) / ((n+1) (n+2)) for a <= b.
    Both have the form f(a) g(b) for a <= b, so prefix sums give O(n) per row.
    """
    a = np.arange(1, n + 1, dtype=np.float64)
    if kind == "cov":
        f, g, scale = a, n + 1 - a, (n + 1) ** 2 * (n + 2)
    else:
        f, g, scale = a, a + 1, (n + 1) * (n + 2)
    V = np.atleast_2d(V)
    pref = np.cumsum(V * f, axis=1)  # sum_{a <= b} v_a f(a)
    diag = np.sum(V**2 * f * g, axis=1)
    off = np.sum(V[:, 1:] * g[1:] * pref[:, :-1], axis=1)
    return (diag + 2.0 * off) / scale


def _max_exact(n: int) -> tuple[float, float]:
    q, p = max_order_weights(n)
    var_smoothed = float(_quad_forms(p, n, "cov")[0])
    # e for the observation of rank r: coefficient (r/n)^(n-1) on X_(r) and
    # (i/n)^(n-1) - ((i-1)/n)^(n-1) on X_(i) for i > r
    qm = _pow_ratio(np.arange(n + 1, dtype=np.float64), n, n - 1)
    step = np.diff(qm)
    r = np.arange(1, n + 1)
    C = np.where(r[None, :] > r[:, None], step[None, :], 0.0)
    C[r - 1, r - 1] = qm[1:]
    V = C - p[None, :]
    mean_var_l = math.fsum(_quad_forms(V, n, "second").tolist())
    return var_smoothed, mean_var_l


@dataclass(frozen=True)
class RhoDiagnostic:
    rho_hat: float
    n_times_one_minus_rho: float
    degenerate: bool
    replications: int


def rho_diagnostic(statistic: Kernel, n: int, law, replications: int, rng=None, experiment: str = "rho") -> RhoDiagnostic:
    """Correlation between conditional means e_1 and e_2 across fresh datasets.

    The e_j are exact for each dataset.  By exchangeability every pair
    (e_i, e_j) with i != j shares the same correlation, so the estimate pools
    all pairs: the average off-diagonal covariance over the average variance.
    """
    if replications < 100:
        raise DomainError("rho diagnostic needs at least 100 replications")
    if n > BOOTSTRAP_ENUM_CAP:
        raise CapacityError(f"rho diagnostic needs n <= {BOOTSTRAP_ENUM_CAP}", BOOTSTRAP_ENUM_CAP)
    if not isinstance(law, (DiscreteDistribution, NormalLaw, UniformLaw)):
        raise DomainError("law must be a DiscreteDistribution, NormalLaw or UniformLaw")
    gen = as_generator(rng, experiment, 0)
    X = law.sample((replications, n), gen)
    e = exact_reports_batch(X, statistic)["e"]
    C = np.cov(e, rowvar=False)
    var = float(np.mean(np.diag(C)))
    if not var > 1e-300 or not np.isfinite(var):
        return RhoDiagnostic(math.nan, math.nan, True, replications)
    off = (C.sum() - np.trace(C)) / (n * (n - 1))
    rho = float(off / var)
    return RhoDiagnostic(rho, n * (1.0 - rho), False, replications)


def rho_mean_statistic(n: int) -> Fraction:
    """Exact correlation for the sample mean: (n^2 - 1) / (n^2 + n - 1)."""
    return Fraction(n * n - 1, n * n + n - 1)


def rho_from_ratio(n: int, ratio: float) -> float:
    """Correlation implied by ``E[Var_l] / Var(s0) = n(1 - rho) / (1/(n-1) + rho)``."""
    return (n - ratio / (n - 1)) / (n + ratio)
