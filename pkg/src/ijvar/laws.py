"""Data-generating laws used by the oracles and simulations.

Every law draws through uniforms and an explicit inverse CDF, so a given
uniform stream maps to the same data on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .core import DomainError


@dataclass(frozen=True)
class DiscreteDistribution:
    """A finite-support law."""

    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __init__(self, support: Sequence[float], probs: Sequence[float]):
        sup = tuple(float(s) for s in support)
        pr = tuple(float(p) for p in probs)
        if not sup or len(sup) != len(pr):
            raise DomainError("support and probabilities must be non-empty and of equal length")
        if len(set(sup)) != len(sup):
            raise DomainError("support values must be distinct")
        if any(p <= 0 for p in pr):
            raise DomainError("probabilities must be positive")
        if abs(math.fsum(pr) - 1.0) > 1e-14:
            raise DomainError(f"probabilities must sum to 1, got {math.fsum(pr)!r}")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", pr)

    @property
    def m(self) -> int:
        return len(self.support)

    @property
    def mean(self) -> float:
        return math.fsum(s * p for s, p in zip(self.support, self.probs))

    @property
    def variance(self) -> float:
        mu = self.mean
        return math.fsum(p * (s - mu) ** 2 for s, p in zip(self.support, self.probs))

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), self.m - 1)
        return np.asarray(self.support)[idx]

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.from_uniforms(rng.random(size))

    def describe(self) -> dict:
        return {"law": "discrete", "support": list(self.support), "probs": list(self.probs)}


@dataclass(frozen=True)
class NormalLaw:
    mu: float = 0.0
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError("normal variance must be positive")

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def variance(self) -> float:
        return self.sigma2

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        # clamp away from 0 so ndtri stays finite
        u = np.maximum(u, 2.0**-60)
        return self.mu + math.sqrt(self.sigma2) * ndtri(u)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.from_uniforms(rng.random(size))

    def describe(self) -> dict:
        return {"law": "normal", "mu": self.mu, "sigma2": self.sigma2}


@dataclass(frozen=True)
class UniformLaw:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise DomainError("uniform law needs hi > lo")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def variance(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * u

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.from_uniforms(rng.random(size))

    def describe(self) -> dict:
        return {"law": "uniform", "lo": self.lo, "hi": self.hi}


Law = DiscreteDistribution | NormalLaw | UniformLaw


def law_from_dict(spec: dict) -> Law:
    """Build a law from ``{"law": "normal", "mu": 0, "sigma2": 1}``-style mappings."""
    if not isinstance(spec, dict) or "law" not in spec:
        raise DomainError("a law needs a 'law' field (normal, uniform or discrete)")
    kind = spec["law"]
    extra = set(spec) - {"law"}
    if kind == "normal":
        _check_keys(extra, {"mu", "sigma2"}, kind)
        return NormalLaw(float(spec.get("mu", 0.0)), float(spec.get("sigma2", 1.0)))
    if kind == "uniform":
        _check_keys(extra, {"lo", "hi"}, kind)
        return UniformLaw(float(spec.get("lo", 0.0)), float(spec.get("hi", 1.0)))
    if kind == "discrete":
        _check_keys(extra, {"support", "probs"}, kind)
        if "support" not in spec or "probs" not in spec:
            raise DomainError("a discrete law needs 'support' and 'probs'")
        return DiscreteDistribution(spec["support"], spec["probs"])
    raise DomainError(f"unknown law {kind!r}; expected normal, uniform or discrete")


def _check_keys(extra: set, allowed: set, kind: str) -> None:
    bad = extra - allowed
    if bad:
        raise DomainError(f"unexpected field(s) for {kind} law: {', '.join(sorted(bad))}")
