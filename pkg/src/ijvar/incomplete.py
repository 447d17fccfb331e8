"""Incomplete, possibly randomised U-statistics and their pseudo-IJ variance estimate.

Each of the C(n, k) subsets is kept independently with probability
N / C(n, k); each kept subset's kernel gets its own omega draw.  Confidence
intervals combine the (n/(n-k))-corrected pseudo-IJ term with ``zeta_k / N``
according to how N compares with n / k.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from . import _backend
from .core import (
    SUBSET_ENUM_CAP,
    DomainError,
    Kernel,
    RandomnessPolicy,
    Sample,
    as_generator,
    omega_for_ranks,
)

log = logging.getLogger(__name__)

REGIMES = ("N<<n/k", "N~n/k", "N>>n/k")
#: Bounds on zeta_k / (N * zeta1_scaled) used by ``regime="auto"``.
AUTO_LOW = 0.1
AUTO_HIGH = 10.0


@dataclass(frozen=True)
class IncompleteRun:
    """Kernel values on the selected subsets (0-based ``masks``)."""

    n: int
    k: int
    N: int
    values: np.ndarray
    masks: np.ndarray
    exhaustive: bool  # selection was literal thinning of the full enumeration
    collisions: int = 0

    @property
    def N_hat(self) -> int:
        return int(self.values.size)

    @property
    def N_hat_i(self) -> np.ndarray:
        return np.bincount(self.masks.ravel(), minlength=self.n)

    def point_estimate(self) -> float:
        """Average over selected subsets (normalised by the realised count)."""
        if self.N_hat == 0:
            return math.nan
        return float(self.values.mean())


def _distinct_rows(n: int, k: int, size: int, gen: np.random.Generator) -> np.ndarray:
    """``size`` uniform k-subsets of range(n), each drawn independently, rows sorted."""
    rows = np.empty((size, k), dtype=np.int64)
    todo = np.arange(size)
    while todo.size:
        draw = np.sort(gen.integers(0, n, size=(todo.size, k)), axis=1)
        ok = np.all(np.diff(draw, axis=1) > 0, axis=1) if k > 1 else np.ones(todo.size, bool)
        rows[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return rows


def draw_incomplete(
    sample: Sample,
    kernel: Kernel,
    N: int,
    rng=None,
    experiment: str = "incomplete",
    replicate: int = 0,
    k: int | None = None,
    enum_cap: int = SUBSET_ENUM_CAP,
) -> IncompleteRun:
    """Select subsets by independent Bernoulli(N / C(n,k)) thinning and evaluate the kernel.

    When C(n, k) is at most ``enum_cap`` every subset is thinned literally.
    Otherwise the count is drawn from its binomial law and that many uniform
    k-subsets are drawn independently; repeats are possible but vanishingly
    rare and are counted in ``collisions``.
    """
    k = kernel.arity if k is None else k
    if k is None:
        raise DomainError("incomplete U-statistics need a kernel of fixed order k")
    n = sample.n
    if not 1 <= k < n:
        raise DomainError(f"need 1 <= k < n, got n = {n}, k = {k}")
    if kernel.arity is not None and kernel.arity != k:
        raise DomainError(f"kernel arity {kernel.arity} does not match k = {k}")
    M = math.comb(n, k)
    if not 1 <= N <= M:
        raise DomainError(f"N must satisfy 1 <= N <= C(n, k) = {M}, got {N}")
    gen = as_generator(rng, experiment, replicate)
    collisions = 0
    if M <= enum_cap:
        keep = np.flatnonzero(gen.random(M) < N / M) if N < M else np.arange(M)
        masks = _backend.unrank_combinations(keep, n, k)
        ranks = keep
        exhaustive = True
    else:
        p = N / M
        if M < 2**62:
            count = int(gen.binomial(M, p))
        else:
            # Binomial(M, N/M) with M astronomically large is Poisson(N) to double precision
            count = int(gen.poisson(N))
        masks = _distinct_rows(n, k, count, gen)
        ranks = np.arange(count)
        exhaustive = False
        if count > 1:
            uniq = np.unique(masks, axis=0).shape[0]
            collisions = count - uniq
            if collisions:
                log.warning("%d repeated subsets among %d draws (n=%d, k=%d)", collisions, count, n, k)
    omega = _omega(kernel, rng, experiment, replicate, ranks, gen)
    values = kernel.evaluate(sample.values[masks], omega) if masks.shape[0] else np.zeros(0)
    return IncompleteRun(n, k, int(N), values, masks, exhaustive, collisions)


def _omega(kernel, rng, experiment, replicate, ranks, gen):
    if not kernel.uses_omega:
        return None
    if isinstance(rng, RandomnessPolicy):
        return omega_for_ranks(kernel, rng, experiment, replicate, ranks)
    return omega_for_ranks(kernel, gen, experiment, replicate, ranks)


@dataclass(frozen=True)
class VarianceEstimate:
    ps_ij_hat: float
    zeta1_scaled: float
    n: int
    k: int
    N: int
    zeta_k_hat: float | None = None
    regime: str | None = None
    empty: bool = False  # no subset was selected

    def with_zeta_k(self, zeta_k_hat: float) -> "VarianceEstimate":
        return replace(self, zeta_k_hat=float(zeta_k_hat))

    def regime_variance(self, regime: str = "auto") -> tuple[float, str]:
        """Variance of the point estimate under the chosen regime, and the regime used."""
        zk = self.zeta_k_hat
        if regime == "auto":
            if zk is None:
                regime = "N>>n/k"
            elif self.zeta1_scaled <= 0:
                regime = "N<<n/k" if zk > 0 else "N>>n/k"
            else:
                r = zk / (self.N * self.zeta1_scaled)
                regime = "N>>n/k" if r < AUTO_LOW else ("N<<n/k" if r > AUTO_HIGH else "N~n/k")
        if regime not in REGIMES:
            raise DomainError(f"regime must be 'auto' or one of {REGIMES}, got {regime!r}")
        if regime != "N>>n/k" and zk is None:
            raise DomainError(f"regime {regime!r} needs a zeta_k estimate")
        if regime == "N>>n/k":
            return self.zeta1_scaled, regime
        if regime == "N<<n/k":
            return zk / self.N, regime
        return self.zeta1_scaled + zk / self.N, regime


def ps_ij_hat(run: IncompleteRun, normalize: str = "target") -> VarianceEstimate:
    """Pseudo-IJ from selected subsets: ``k^2/n^2 sum_i (e_i - s0)^2``.

    With ``normalize="target"`` (default) both averages divide by the target
    N, exactly as ``s0 = sum/N`` and ``e_i = n/(N k) sum_{S contains i}``;
    ``"realized"`` divides by the realised count instead.
    """
    n, k = run.n, run.k
    if normalize == "target":
        denom = float(run.N)
    elif normalize == "realized":
        denom = float(max(run.N_hat, 1))
    else:
        raise DomainError("normalize must be 'target' or 'realized'")
    s0 = math.fsum(run.values.tolist()) / denom
    if run.N_hat:
        e = _backend.scatter_sums(run.masks, run.values, n) * (n / (denom * k))
    else:
        e = np.zeros(n)
    est = k * k / (n * n) * math.fsum(((e - s0) ** 2).tolist())
    return VarianceEstimate(est, (n / (n - k)) ** 2 * est, n, k, run.N, empty=run.N_hat == 0)


def covariance_form(run: IncompleteRun) -> float:
    """``sum_i Cov^2(s*, w_i*)`` over the selected subsets (population covariances)."""
    if run.N_hat == 0:
        return 0.0
    inc = np.zeros((run.N_hat, run.n))
    np.put_along_axis(inc, run.masks, 1.0, axis=1)
    s = run.values
    cov = (s @ inc) / run.N_hat - s.mean() * inc.mean(axis=0)
    return float(np.sum(cov**2))


def zeta_k_hat(sample: Sample, kernel: Kernel, partitions: int = 1, rng=None,
               experiment: str = "zeta", replicate: int = 0, k: int | None = None) -> float:
    """Kernel variance from disjoint subsamples, averaged over random partitions."""
    k = kernel.arity if k is None else k
    n = sample.n
    if k is None or n < 2 * k:
        raise DomainError(f"need n >= 2k for two disjoint subsamples, got n = {n}, k = {k}")
    if partitions < 1:
        raise DomainError("partitions must be at least 1")
    gen = as_generator(rng, experiment, replicate)
    blocks = n // k
    out = []
    for _ in range(partitions):
        perm = gen.permutation(n)[: blocks * k].reshape(blocks, k)
        omega = kernel.omega_from_uniforms(gen.random(blocks)) if kernel.uses_omega else None
        vals = kernel.evaluate(sample.values[perm], omega)
        out.append(float(vals.var(ddof=1)))
    return math.fsum(out) / partitions


def z_quantile(level: float) -> float:
    if not 0 < level < 1:
        raise DomainError(f"confidence level must be in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


def confidence_interval(point: float, estimate: VarianceEstimate, level: float = 0.95,
                        regime: str = "auto") -> tuple[float, float]:
    """``point +/- z * sqrt(regime variance)``."""
    if not estimate.k < estimate.n:
        raise DomainError("need k < n")
    z = z_quantile(level)
    var, _ = estimate.regime_variance(regime)
    hw = z * math.sqrt(max(var, 0.0))
    return point - hw, point + hw


@dataclass(frozen=True)
class IncompleteResult:
    run: IncompleteRun
    estimate: VarianceEstimate
    point: float
    interval: tuple[float, float] | None
    regime: str | None


def analyze(sample: Sample, kernel: Kernel, N: int, level: float | None = 0.95, rng=None,
            experiment: str = "incomplete", replicate: int = 0, partitions: int = 10,
            regime: str = "auto", k: int | None = None) -> IncompleteResult:
    """Draw, estimate the variance and (optionally) build an interval in one call."""
    run = draw_incomplete(sample, kernel, N, rng, experiment, replicate, k=k)
    est = ps_ij_hat(run)
    if sample.n >= 2 * run.k:
        est = est.with_zeta_k(zeta_k_hat(sample, kernel, partitions, rng, experiment + "/zeta", replicate, k=run.k))
    interval = None
    used = None
    if level is not None:
        _, used = est.regime_variance(regime)
        interval = confidence_interval(run.point_estimate(), est, level, regime)
    return IncompleteResult(run, replace(est, regime=used), run.point_estimate(), interval, used)


__all__ = [
    "IncompleteResult",
    "IncompleteRun",
    "REGIMES",
    "VarianceEstimate",
    "analyze",
    "confidence_interval",
    "covariance_form",
    "draw_incomplete",
    "ps_ij_hat",
    "z_quantile",
    "zeta_k_hat",
]
