"""Built-in statistics and U-statistic kernels.

All kernels work on the last axis of their input and are symmetric in it.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import DomainError, Kernel

TRIM_FRACTION = 0.2
STUMP_QUERY = 0.0


def _mean(x):
    return x.mean(axis=-1)


def _variance(x):
    if x.shape[-1] < 2:
        raise DomainError("the variance kernel needs at least 2 inputs")
    return x.var(axis=-1, ddof=1)


def _max(x):
    return x.max(axis=-1)


def _min(x):
    return x.min(axis=-1)


def _median(x):
    return np.median(x, axis=-1)


def _product(x):
    return x.prod(axis=-1)


def _constant(x):
    return np.ones(x.shape[:-1])


def _trimmed_mean(x):
    k = x.shape[-1]
    cut = int(np.floor(TRIM_FRACTION * k))
    xs = np.sort(x, axis=-1)
    return xs[..., cut : k - cut].mean(axis=-1)


def _stump(x, omega):
    """One-split regression stump evaluated at ``STUMP_QUERY``.

    The split sits between the m-th and (m+1)-th order statistics with
    m = floor(k/2) + omega (omega in {0, 1} jitters the split point), and
    the prediction is the mean of the points on the query's side.
    """
    k = x.shape[-1]
    xs = np.sort(x, axis=-1)
    if k == 1:
        return xs[..., 0] + 0.0 * omega
    m = np.clip(k // 2 + np.asarray(omega, dtype=np.int64), 1, k - 1)
    m = np.broadcast_to(m, xs.shape[:-1])
    csum = np.cumsum(xs, axis=-1)
    lo = np.take_along_axis(xs, (m - 1)[..., None], axis=-1)[..., 0]
    hi = np.take_along_axis(xs, m[..., None], axis=-1)[..., 0]
    left_sum = np.take_along_axis(csum, (m - 1)[..., None], axis=-1)[..., 0]
    left = left_sum / m
    right = (csum[..., -1] - left_sum) / (k - m)
    return np.where(STUMP_QUERY <= 0.5 * (lo + hi), left, right)


_FACTORIES: dict[str, Callable[[int | None], Kernel]] = {
    "mean": lambda k: Kernel("mean", _mean, k),
    "variance": lambda k: Kernel("variance", _variance, k),
    "max": lambda k: Kernel("max", _max, k),
    "min": lambda k: Kernel("min", _min, k),
    "median": lambda k: Kernel("median", _median, k),
    "product": lambda k: Kernel("product", _product, k),
    "constant": lambda k: Kernel("constant", _constant, k),
    "trimmed_mean": lambda k: Kernel("trimmed_mean", _trimmed_mean, k),
    "stump": lambda k: Kernel("stump", _stump, k, (0.0, 1.0), (0.5, 0.5)),
}

#: Names accepted by :func:`get_kernel`.
KERNEL_NAMES = tuple(sorted(_FACTORIES))


def get_kernel(name: str, arity: int | None = None) -> Kernel:
    """Look up a built-in kernel by name; ``arity=None`` gives a whole-sample statistic."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise DomainError(f"unknown statistic {name!r}; available: {', '.join(KERNEL_NAMES)}") from None
    if name == "variance" and arity is not None and arity < 2:
        raise DomainError("the variance kernel needs arity >= 2")
    return factory(arity)
