"""Exact H-decomposition of a kernel over a finite-support law.

The kernel is tabulated over ``support^k``; conditional means ``s_c`` come
from marginalising trailing axes, the degenerate components ``s^c`` from
inclusion-exclusion over sub-tuples, and ``V_j = E[(s^j)^2]``.  These give
exact values for every expectation formula the estimators are tested against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import CapacityError, DomainError, Kernel, multinomial
from .laws import DiscreteDistribution
from .ustat import CoefficientTable

#: Largest kernel table (m^k entries) the oracle will build.
TABLE_CAP = 50_000

__all__ = [
    "DiscreteDistribution",
    "HDecomposition",
    "decompose",
    "enumerate_datasets",
    "expected_estimator",
    "variance_of_u",
]


@dataclass(frozen=True)
class HDecomposition:
    """``theta``, components ``s^j`` (arrays over support^j) and ``V_j`` for j = 1..k.

    For kernels with auxiliary randomness the components describe the
    omega-averaged kernel; ``omega_variance = E[Var(s | X)]`` is the extra
    variance that the extended decomposition assigns to the top component,
    included in ``V_extended`` and ``zeta_k``.
    """

    theta: float
    components: tuple[np.ndarray, ...]
    V: np.ndarray
    law: DiscreteDistribution
    k: int
    omega_variance: float = 0.0

    @property
    def V_extended(self) -> np.ndarray:
        v = self.V.copy()
        v[-1] += self.omega_variance
        return v

    @property
    def zeta_k(self) -> float:
        """``Var(s)`` including omega variation."""
        return math.fsum(math.comb(self.k, j) * v for j, v in enumerate(self.V_extended, start=1))

    @property
    def zeta_1(self) -> float:
        return float(self.V[0])


def _kernel_table(kernel: Kernel, law: DiscreteDistribution, k: int):
    m = law.m
    grid = np.array(list(itertools.product(law.support, repeat=k))).reshape(*([m] * k), k)
    if not kernel.uses_omega:
        return kernel.evaluate(grid), 0.0
    tables = [kernel.evaluate(grid, np.full(grid.shape[:-1], w)) for w in kernel.omega_values]
    probs = np.asarray(kernel.omega_probs)
    mean = sum(p * t for p, t in zip(probs, tables))
    cond_var = sum(p * (t - mean) ** 2 for p, t in zip(probs, tables))
    return mean, cond_var


def _expect_over(table: np.ndarray, probs: np.ndarray, axes: int) -> np.ndarray:
    """Integrate out the last ``axes`` axes against the product law."""
    out = table
    for _ in range(axes):
        out = out @ probs
    return out


def decompose(kernel: Kernel, law: DiscreteDistribution, k: int | None = None) -> HDecomposition:
    """Exact H-decomposition of ``kernel`` (order k) under i.i.d. draws from ``law``."""
    k = kernel.arity if k is None else k
    if k is None or k < 1:
        raise DomainError("the H-decomposition needs a kernel of fixed order k >= 1")
    if not isinstance(law, DiscreteDistribution):
        raise DomainError("the H-decomposition needs a DiscreteDistribution")
    if law.m**k > TABLE_CAP:
        raise CapacityError(f"support^k = {law.m}^{k} = {law.m**k} entries exceeds the cap {TABLE_CAP}", TABLE_CAP)
    probs = np.asarray(law.probs)
    table, cond_var = _kernel_table(kernel, law, k)
    theta = float(_expect_over(table, probs, k))

    # s_c(x_1..x_c) = E[s | first c fixed] - theta, on support^c
    s_marg = [None] + [_expect_over(table, probs, k - c) - theta for c in range(1, k + 1)]
    components: list[np.ndarray] = []
    V = np.zeros(k)
    for c in range(1, k + 1):
        comp = np.zeros((law.m,) * c)
        for size in range(1, c + 1):
            sign = (-1) ** (c - size)
            for sub in itertools.combinations(range(c), size):
                # s_size evaluated on the coordinates in ``sub``, broadcast over the rest
                shape = [law.m if i in sub else 1 for i in range(c)]
                comp = comp + sign * s_marg[size].reshape(shape)
        components.append(comp)
        weight = probs
        for _ in range(c - 1):
            weight = np.multiply.outer(weight, probs)
        V[c - 1] = float(np.sum(weight * comp**2))
    omega_var = float(_expect_over(cond_var, probs, k)) if kernel.uses_omega else 0.0
    return HDecomposition(theta, tuple(components), V, law, k, omega_var)


def variance_of_u(decomp: HDecomposition, n: int, extended: bool = True) -> float:
    """``Var(U) = sum_j C(k,j)^2 / C(n,j) V_j`` for the complete U-statistic."""
    k = decomp.k
    if n < k:
        raise DomainError("need n >= k")
    V = decomp.V_extended if extended else decomp.V
    return math.fsum(math.comb(k, j) ** 2 / math.comb(n, j) * V[j - 1] for j in range(1, k + 1))


def expected_estimator(coeffs: CoefficientTable, decomp: HDecomposition, which: str, d: int | None = None) -> float:
    """Closed-form expectation of ``"IJ_U"``, ``"psIJ_U"`` or ``"psIJ_U(d)"``."""
    if coeffs.k != decomp.k:
        raise DomainError(f"coefficient table has k = {coeffs.k} but the decomposition has k = {decomp.k}")
    weights = coeffs.variance_weights()
    V = decomp.V_extended
    if which == "IJ_U":
        return math.fsum((coeffs.r_ij * weights * V).tolist()) + coeffs.theta2_coef * decomp.theta**2
    if which == "psIJ_U":
        return math.fsum((coeffs.r_ps * weights * V).tolist())
    if which == "psIJ_U(d)":
        if d is None or not 1 <= d <= coeffs.d_max:
            raise DomainError(f"order d must be in 1..{coeffs.d_max}")
        return math.fsum((coeffs.r_d[:, d - 1] * weights * V).tolist())
    raise DomainError(f"unknown estimator {which!r}; expected IJ_U, psIJ_U or psIJ_U(d)")


def enumerate_datasets(law: DiscreteDistribution, n: int) -> Iterator[tuple[np.ndarray, float]]:
    """Every multiset of n draws from ``law`` (sorted) with its probability.

    Expectations of permutation-invariant functions of the data are exact
    sums over this enumeration.
    """
    m = law.m
    total = math.comb(n + m - 1, m - 1)
    if total > 2_000_000:
        raise CapacityError(f"{total} datasets exceed the enumeration cap", 2_000_000)
    support = np.asarray(law.support)
    for counts in _counts(n, m):
        prob = multinomial(counts) * math.prod(p**c for p, c in zip(law.probs, counts))
        yield np.repeat(support, counts), prob


def _counts(n: int, m: int):
    if m == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _counts(n - first, m - 1):
            yield (first, *rest)
