"""Exact bootstrap moments by enumerating every resampling weight vector.

Three routes to the variance of the bagged statistic are computed
independently so their agreement is a real check:

* ``ij_b``: sum of squared covariances between the statistic and each weight;
* ``jk_b``: sum of squared deviations of the conditional means
  ``E_*[s* | first draw is x_j]``, enumerated by fixing the first slot;
* ``var_l``: variance of the linear surrogate ``l* = sum_j w_j (e_j - s0)``,
  computed by a second pass over the enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    BOOTSTRAP_ENUM_CAP,
    CapacityError,
    DomainError,
    Kernel,
    Sample,
    _multinomial_probs,
    bootstrap_weight_table,
    require_no_omega,
)
from . import _backend


@dataclass(frozen=True)
class ExactBootstrapReport:
    s0: float
    e: np.ndarray
    cov: np.ndarray
    ij_b: float
    jk_b: float
    var_l: float
    e_conditional: np.ndarray
    mean_w: np.ndarray

    @property
    def n(self) -> int:
        return int(self.e.size)

    @property
    def max_gap(self) -> float:
        """Largest pairwise difference among the three variance routes."""
        v = (self.ij_b, self.jk_b, self.var_l)
        return max(v) - min(v)


def _expansion_index(W: np.ndarray) -> np.ndarray:
    """Row m lists observation j exactly ``W[m, j]`` times, in index order."""
    M, n = W.shape
    return np.repeat(np.tile(np.arange(n), M), W.ravel()).reshape(M, -1)


@lru_cache(maxsize=None)
def _tables(n: int):
    W, p = bootstrap_weight_table(n)
    idx = _expansion_index(W)
    # fix the first draw at x_j; the remaining n-1 draws are free
    Wc = _backend.compositions(n - 1, n)
    pc = _multinomial_probs(Wc, n - 1, n)
    cond = np.stack([_expansion_index(Wc + np.eye(n, dtype=np.int64)[j]) for j in range(n)])
    for arr in (W, p, idx, pc, cond):
        arr.setflags(write=False)
    return W, p, idx, pc, cond


def _check(sample: Sample, statistic: Kernel) -> None:
    require_no_omega(statistic, "exact bootstrap enumeration")
    if statistic.arity is not None and statistic.arity != sample.n:
        raise DomainError(f"statistic arity {statistic.arity} does not match n = {sample.n}")
    if sample.n > BOOTSTRAP_ENUM_CAP:
        raise CapacityError(
            f"exact bootstrap enumeration is capped at n <= {BOOTSTRAP_ENUM_CAP}, got n = {sample.n}",
            BOOTSTRAP_ENUM_CAP,
        )


def _fsum_dot(a: np.ndarray, b: np.ndarray) -> float:
    return math.fsum((a * b).tolist())


def exact_report(sample: Sample, statistic: Kernel) -> ExactBootstrapReport:
    """All three exact bootstrap variance routes for a statistic of the whole sample."""
    _check(sample, statistic)
    n = sample.n
    x = sample.values
    W, p, idx, pc, cond = _tables(n)
    s = statistic.evaluate(x[idx])

    s0 = _fsum_dot(p, s)
    mean_w = np.array([_fsum_dot(p, W[:, j]) for j in range(n)])
    e = np.array([_fsum_dot(p * s, W[:, j]) for j in range(n)])
    cov = e - s0 * mean_w
    ij_b = math.fsum((cov**2).tolist())

    e_cond = np.array([_fsum_dot(pc, statistic.evaluate(x[cond[j]])) for j in range(n)])
    jk_b = math.fsum(((e_cond - s0) ** 2).tolist())

    # literal second pass: l* for every weight vector, then its variance
    beta = e - s0
    lvals = np.array([math.fsum((row * beta).tolist()) for row in W])
    l_mean = _fsum_dot(p, lvals)
    var_l = _fsum_dot(p, (lvals - l_mean) ** 2)

    return ExactBootstrapReport(
        s0=s0, e=e, cov=cov, ij_b=ij_b, jk_b=jk_b, var_l=var_l, e_conditional=e_cond, mean_w=mean_w
    )


def exact_smoothed_value(sample: Sample, statistic: Kernel) -> float:
    """The bagged value ``E_*[s*]`` only."""
    _check(sample, statistic)
    W, p, idx, _, _ = _tables(sample.n)
    return _fsum_dot(p, statistic.evaluate(sample.values[idx]))


def exact_reports_batch(X: np.ndarray, statistic: Kernel, chunk: int = 512) -> dict[str, np.ndarray]:
    """Vectorised exact moments for many datasets at once (rows of ``X``).

    Returns arrays ``s0``, ``e`` (conditional route), ``ij_b``, ``jk_b`` and
    ``var_l``. Plain floating sums are used, so agreement with
    :func:`exact_report` is to rounding, not bit-level.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    R, n = X.shape
    _check(Sample(X[0]), statistic)
    W, p, idx, pc, cond = _tables(n)
    out = {k: [] for k in ("s0", "e", "ij_b", "jk_b", "var_l")}
    Wf = W.astype(np.float64)
    for start in range(0, R, chunk):
        Xb = X[start : start + chunk]
        s = statistic.evaluate(Xb[:, idx])  # (r, M)
        s0 = s @ p
        e_w = (s * p) @ Wf  # (r, n)
        cov = e_w - s0[:, None]
        e_c = statistic.evaluate(Xb[:, cond]) @ pc  # (r, n)
        lvals = (cov @ Wf.T)  # (r, M)
        lm = lvals @ p
        out["s0"].append(s0)
        out["e"].append(e_c)
        out["ij_b"].append((cov**2).sum(axis=1))
        out["jk_b"].append(((e_c - s0[:, None]) ** 2).sum(axis=1))
        out["var_l"].append(((lvals - lm[:, None]) ** 2) @ p)
    return {k: np.concatenate(v) for k, v in out.items()}
