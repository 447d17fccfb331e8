"""Complete U-statistics: the IJ and pseudo-IJ variance estimates and their coefficients.

For a kernel of order k averaged over all C(n, k) subsets, ``e_j`` is the
average over subsets containing observation j and ``s0`` the overall average.
The exact infinitesimal jackknife is ``IJ_U = k^2/n^2 sum (alpha e_j - beta s0)^2``
while the estimator used in ensemble practice drops alpha and beta:
``ps-IJ_U = k^2/n^2 sum (e_j - s0)^2``.  Its order-d generalisation squares the
d-th order inclusion-exclusion contrasts of subset-conditional means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _backend
from .core import (
    CapacityError,
    DomainError,
    Kernel,
    Sample,
    binom0,
    binom_ratio,
    omega_for_ranks,
    subset_table,
)

#: Work limit for order-d estimates: subset-to-d-subset incidences touched.
HIGHER_ORDER_COST_CAP = 50_000_000


def alpha_beta(n: int, k: int, form: str = "published") -> tuple[float, float]:
    """Finite-n coefficients of the exact IJ for a complete U-statistic.

    ``form="published"`` is the published closed form.  ``form="derivative"``
    differentiates the selection probabilities directly; it flips the sign of
    the sum in alpha, which makes alpha equal beta identically.
    """
    if not 1 <= k < n:
        raise DomainError(f"alpha and beta need 1 <= k < n, got n = {n}, k = {k}")
    sq = math.fsum(j * j / (n - j) for j in range(k))
    lin = math.fsum(j / (n - j) for j in range(k))
    if form == "published":
        alpha = 1.0 + ((k - 1) / 2.0 - sq / k) / n
    elif form == "derivative":
        alpha = 1.0 + ((k - 1) / 2.0 + sq / k) / n
    else:
        raise DomainError(f"form must be 'published' or 'derivative', got {form!r}")
    beta = 1.0 + lin / k
    return alpha, beta


def selection_probabilities(n: int, k: int, delta: float) -> tuple[float, float]:
    """Probability of one specific unordered k-subset when observation 1 has its mass perturbed.

    All other observations carry mass ``delta/n`` and observation 1 the rest;
    subsets are drawn sequentially without replacement proportional to mass.
    Returns ``(p0, p1)`` for a subset excluding and including observation 1.
    """
    p0 = math.factorial(k)
    for m in range(k):
        p0 *= delta / (n - m * delta)
    heavy = n - (n - 1) * delta
    p1 = 0.0
    for j in range(k):
        q = math.factorial(k - 1)
        for m in range(j):
            q *= delta / (n - m * delta)
        q *= heavy / (n - j * delta)
        for m in range(j + 1, k):
            q /= n - m
        p1 += q
    return p0, p1


@dataclass(frozen=True)
class UStatReport:
    u_value: float
    s0: float
    e: np.ndarray
    ij_u: float
    ps_ij_u: float
    alpha: float
    beta: float
    n: int
    k: int


def _subset_values(sample: Sample, kernel: Kernel, k: int, rng, experiment: str, replicate: int):
    if kernel.arity is not None and kernel.arity != k:
        raise DomainError(f"kernel arity {kernel.arity} does not match k = {k}")
    masks = subset_table(sample.n, k)
    omega = omega_for_ranks(kernel, rng, experiment, replicate, np.arange(masks.shape[0]))
    return masks, kernel.evaluate(sample.values[masks], omega)


def complete_ustat_report(
    sample: Sample,
    kernel: Kernel,
    rng=None,
    experiment: str = "ustat",
    replicate: int = 0,
    k: int | None = None,
) -> UStatReport:
    """Enumerate all subsets and return U, e_j, IJ_U and ps-IJ_U.

    Kernels with auxiliary randomness draw one omega per subset, derived from
    the subset's lexicographic rank, so both estimates see identical draws.
    """
    k = kernel.arity if k is None else k
    if k is None:
        raise DomainError("complete U-statistics need a kernel with fixed arity")
    n = sample.n
    alpha, beta = alpha_beta(n, k)
    masks, vals = _subset_values(sample, kernel, k, rng, experiment, replicate)
    s0 = math.fsum(vals.tolist()) / vals.size
    e = _backend.scatter_sums(masks, vals, n) / math.comb(n - 1, k - 1)
    scale = k * k / (n * n)
    ij_u = scale * math.fsum(((alpha * e - beta * s0) ** 2).tolist())
    ps_ij_u = scale * math.fsum(((e - s0) ** 2).tolist())
    return UStatReport(s0, s0, e, ij_u, ps_ij_u, alpha, beta, n, k)


# ---------------------------------------------------------------------------
# higher order


def _check_order(n: int, k: int, d: int) -> None:
    if not 1 <= d <= k:
        raise DomainError(f"order d must satisfy 1 <= d <= k, got d = {d}, k = {k}")
    if not k < n:
        raise DomainError(f"need k < n, got n = {n}, k = {k}")


def conditional_means(sample_values: np.ndarray, masks: np.ndarray, vals: np.ndarray, j: int) -> np.ndarray:
    """Averages over subsets containing each j-subset, indexed by lexicographic rank."""
    n = sample_values.size
    C, k = masks.shape
    pos = _backend.combinations(k, j)
    sub = masks[:, pos].reshape(-1, j)
    ranks = _backend.rank_combinations(sub, n)
    sums = np.bincount(ranks, weights=np.repeat(vals, pos.shape[0]), minlength=math.comb(n, j))
    return sums / math.comb(n - j, k - j)


def ps_ij_higher_order(
    sample: Sample,
    kernel: Kernel,
    d: int,
    rng=None,
    experiment: str = "ustat",
    replicate: int = 0,
    k: int | None = None,
    allow_high_order: bool = False,
    cost_cap: int = HIGHER_ORDER_COST_CAP,
) -> float:
    """Order-d pseudo-IJ: ``(C(k,d)/C(n,d))^2`` times the sum over d-subsets A of
    the squared contrast ``sum_{B subset A} (-1)^{d-|B|} e_B`` (with ``e_{} = s0``).

    Orders above 2 are computed generically but must be requested with
    ``allow_high_order=True``.
    """
    k = kernel.arity if k is None else k
    n = sample.n
    _check_order(n, k, d)
    if d >= 3 and not allow_high_order:
        raise CapacityError("orders d >= 3 are expensive; pass allow_high_order=True", 2)
    total = math.comb(n, k)
    cost = total * (2**k) + math.comb(n, d) * (2**d)
    if cost > cost_cap:
        raise CapacityError(f"order-{d} estimate needs ~{cost} operations, above the cap {cost_cap}", cost_cap)
    masks, vals = _subset_values(sample, kernel, k, rng, experiment, replicate)
    contrast = _contrasts(sample.values, masks, vals, d)
    scale = binom_ratio(k, d, n, d) ** 2
    return scale * math.fsum((contrast**2).tolist())


def _contrasts(x: np.ndarray, masks: np.ndarray, vals: np.ndarray, d: int) -> np.ndarray:
    n = x.size
    s0 = math.fsum(vals.tolist()) / vals.size
    dsets = _backend.combinations(n, d)
    contrast = np.full(dsets.shape[0], (-1.0) ** d * s0)
    for j in range(1, d + 1):
        e_j = conditional_means(x, masks, vals, j)
        pos = _backend.combinations(d, j)
        ranks = _backend.rank_combinations(dsets[:, pos].reshape(-1, j), n).reshape(dsets.shape[0], -1)
        contrast += (-1.0) ** (d - j) * e_j[ranks].sum(axis=1)
    return contrast


def order_weight_coefficients(n: int, k: int, d: int, variant: str = "corrected") -> np.ndarray:
    """Coefficient ``c_b`` multiplying each product of b subset indicators in the order-d weight.

    The weight for a d-subset A is ``sum_{B subset A} (-1)^{d-|B|} c_{|B|} prod_{i in B} w_i``.
    ``variant="corrected"`` uses ``c_b = C(n-d, k-d) / C(n-b, k-b)``, for which
    the covariance with the statistic equals ``C(k,d)/C(n,d)`` times the
    contrast.  ``variant="literal"`` uses ``C(n-d+b, k-d+b) / C(n, k)``, which
    agrees only at b = 0 and b = d.
    """
    _check_order(n, k, d)
    if variant == "corrected":
        return np.array([binom_ratio(n - d, k - d, n - b, k - b) for b in range(d + 1)])
    if variant == "literal":
        return np.array([binom_ratio(n - d + b, k - d + b, n, k) for b in range(d + 1)])
    raise DomainError(f"unknown weight variant {variant!r}")


def order_weight_covariances(
    sample: Sample, kernel: Kernel, d: int, variant: str = "corrected", k: int | None = None
) -> np.ndarray:
    """``Cov_*(s*, W_A)`` for every d-subset A, by direct enumeration of subsets.

    Uses only the kernel values and subset incidences, not conditional means,
    so it is an independent check of the contrast route.
    """
    k = kernel.arity if k is None else k
    n = sample.n
    _check_order(n, k, d)
    masks, vals = _subset_values(sample, kernel, k, None, "ustat", 0)
    coef = order_weight_coefficients(n, k, d, variant)
    # weight value as a function of t = |A intersect S|
    wt = np.array([
        math.fsum((-1) ** (d - b) * math.comb(t, b) * coef[b] for b in range(t + 1)) for t in range(d + 1)
    ])
    inc_s = np.zeros((masks.shape[0], n))
    np.put_along_axis(inc_s, masks, 1.0, axis=1)
    dsets = _backend.combinations(n, d)
    inc_a = np.zeros((dsets.shape[0], n))
    np.put_along_axis(inc_a, dsets, 1.0, axis=1)
    t = np.rint(inc_a @ inc_s.T).astype(np.int64)  # (C(n,d), C(n,k))
    W = wt[t]
    sc = vals - vals.mean()
    return (W * sc).mean(axis=1)


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class CoefficientTable:
    """Expectation coefficients; arrays are indexed by j = 1..k along axis 0."""

    n: int
    k: int
    d_max: int
    alpha: float
    beta: float
    r_ij: np.ndarray
    r_ps: np.ndarray
    lambda_d: np.ndarray  # (k, d_max)
    r_d: np.ndarray  # (k, d_max)
    aux: dict = field(default_factory=dict)
    theta2_coef: float = 0.0  # coefficient of theta^2 in E[IJ_U]

    def variance_weights(self) -> np.ndarray:
        """``C(k,j)^2 / C(n,j)`` for j = 1..k, the weights of V_j in Var(U)."""
        return _variance_weights(self.n, self.k)


def _lambda_pipeline(n: int, k: int, d: int) -> tuple[np.ndarray, dict]:
    a = np.array([1.0 / _binom_f(n - i, k - i) for i in range(d + 1)])
    b = np.array([math.fsum((-1) ** (i - l) * math.comb(i, l) * a[l] for l in range(i + 1)) for i in range(d + 1)])
    c = np.array([b[i] * _binom_f(n - d, k - i) for i in range(d + 1)])
    m = c[::-1].copy()
    lam = np.zeros(k)
    for j in range(1, k + 1):
        total = []
        for i in range(d + 1):
            denom = binom0(n - d, j - d + i)
            if denom == 0:
                continue
            inner = math.fsum(
                (-1) ** (i - l) * math.comb(i, l) * m[l] * binom0(k - d + l, j - d + i) for l in range(i + 1)
            )
            total.append(math.comb(d, i) / denom * inner * inner)
        lam[j - 1] = math.fsum(total)
    aux = {"a": a, "b": b, "c": c, "m": m}
    return lam, aux


def _binom_f(n: int, k: int) -> float:
    if k < 0 or k > n:
        return 0.0
    return float(math.comb(n, k))


def _variance_weights(n: int, k: int) -> np.ndarray:
    return np.array([binom_ratio(k, j, n, j) * _binom_f(k, j) for j in range(1, k + 1)])


def coefficient_tables(n: int, k: int, d_max: int = 1) -> CoefficientTable:
    """Coefficients of V_j in the expectations of IJ_U, ps-IJ_U and ps-IJ_U(d)."""
    if not 1 <= d_max <= k < n:
        raise DomainError(f"need 1 <= d_max <= k < n, got n = {n}, k = {k}, d_max = {d_max}")
    alpha, beta = alpha_beta(n, k)
    j = np.arange(1, k + 1, dtype=np.float64)
    base = ((n - k) / n) ** 2 * j / (1.0 - j / n)
    r_ps = base
    r_ij = base * alpha**2 + k * k / n * (alpha - beta) ** 2
    lam = np.zeros((k, d_max))
    r_d = np.zeros((k, d_max))
    aux: dict = {}
    vw = _variance_weights(n, k)
    for d in range(1, d_max + 1):
        lam_d, aux_d = _lambda_pipeline(n, k, d)
        lam[:, d - 1] = lam_d
        scale = binom_ratio(k, d, n, d) * _binom_f(k, d)
        r_d[:, d - 1] = lam_d * scale / vw
        aux[d] = aux_d
        if d == 2:
            aux["C0"], aux["C1"], aux["C2"] = aux_d["m"][2], aux_d["m"][1], aux_d["m"][0]
    return CoefficientTable(
        n=n, k=k, d_max=d_max, alpha=alpha, beta=beta, r_ij=r_ij, r_ps=r_ps,
        lambda_d=lam, r_d=r_d, aux=aux, theta2_coef=k * k / n * (alpha - beta) ** 2,
    )


@lru_cache(maxsize=None)
def _incidence(n: int, k: int, order: int) -> np.ndarray:
    """Subset-by-``order``-subset incidence matrix (C(n,k), C(n,order))."""
    masks = subset_table(n, k)
    pos = _backend.combinations(k, order)
    ranks = _backend.rank_combinations(masks[:, pos].reshape(-1, order), n).reshape(masks.shape[0], -1)
    inc = np.zeros((masks.shape[0], math.comb(n, order)))
    np.put_along_axis(inc, ranks, 1.0, axis=1)
    inc.setflags(write=False)
    return inc


def ustat_estimates_batch(X: np.ndarray, kernel: Kernel, k: int | None = None, orders: tuple[int, ...] = ()) -> dict[str, np.ndarray]:
    """U, IJ_U and ps-IJ_U for every row of ``X`` (kernels without omega only).

    ``orders`` lists extra orders d >= 2 whose ps-IJ_U(d) is also returned
    under ``"ps_ij_u_<d>"``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    R, n = X.shape
    k = kernel.arity if k is None else k
    if kernel.uses_omega:
        raise DomainError("batch U-statistics need a kernel without auxiliary randomness")
    alpha, beta = alpha_beta(n, k)
    masks = subset_table(n, k)
    vals = kernel.evaluate(X[:, masks])  # (R, C)
    s0 = vals.mean(axis=1)
    e = vals @ _incidence(n, k, 1) / math.comb(n - 1, k - 1)
    scale = k * k / (n * n)
    out = {
        "u": s0,
        "ij_u": scale * np.sum((alpha * e - beta * s0[:, None]) ** 2, axis=1),
        "ps_ij_u": scale * np.sum((e - s0[:, None]) ** 2, axis=1),
    }
    for d in orders:
        _check_order(n, k, d)
        dsets = _backend.combinations(n, d)
        contrast = np.repeat(((-1.0) ** d * s0)[:, None], dsets.shape[0], axis=1)
        for j in range(1, d + 1):
            e_j = vals @ _incidence(n, k, j) / math.comb(n - j, k - j)
            pos = _backend.combinations(d, j)
            ranks = _backend.rank_combinations(dsets[:, pos].reshape(-1, j), n).reshape(dsets.shape[0], -1)
            contrast += (-1.0) ** (d - j) * e_j[:, ranks].sum(axis=2)
        out[f"ps_ij_u_{d}"] = binom_ratio(k, d, n, d) ** 2 * np.sum(contrast**2, axis=1)
    return out
