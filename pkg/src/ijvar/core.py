"""Shared types, the kernel abstraction, randomness streams and combinatorics."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _backend

#: Largest n for which all bootstrap weight vectors are enumerated.
BOOTSTRAP_ENUM_CAP = 8
#: Largest number of subsets C(n, k) enumerated exactly.
SUBSET_ENUM_CAP = 2_000_000
#: Binomials with n above this are evaluated in log space.
EXACT_BINOM_MAX_N = 64
#: Seed used when a caller does not supply one.
DEFAULT_SEED = 20240601

_MASK64 = (1 << 64) - 1


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class CapacityError(RuntimeError):
    """A request exceeds a configured enumeration or cost cap."""

    def __init__(self, message: str, limit: int | float | None = None):
        super().__init__(message)
        self.limit = limit


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True, eq=False)
class Sample:
    """An observed dataset of real numbers."""

    values: np.ndarray

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size < 2:
            raise DomainError(f"a sample needs at least 2 observations, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("sample values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    @classmethod
    def from_file(cls, path) -> "Sample":
        """Read one observation per line; blank lines and ``#`` comments are skipped."""
        vals = []
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise DomainError(f"{path}: {exc.strerror}") from None
        with fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                try:
                    vals.append(float(text))
                except ValueError:
                    raise DomainError(f"{path}:{lineno}: cannot parse {text!r} as a number") from None
        return cls(vals)


@dataclass(frozen=True)
class WeightVector:
    """Resampling multiplicities ``w_j``: how often observation j was drawn."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise DomainError("weight counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)

    def probability(self) -> Fraction:
        """Multinomial probability under uniform resampling of ``total`` draws."""
        n = len(self.counts)
        return Fraction(multinomial(self.counts), n ** self.total)


@dataclass(frozen=True)
class SubsetMask:
    """A k-subset of observation indices, 1-based and strictly increasing."""

    indices: tuple[int, ...]
    n: int

    def __post_init__(self):
        idx = self.indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DomainError("subset indices must be strictly increasing")
        if idx and (idx[0] < 1 or idx[-1] > self.n):
            raise DomainError(f"subset indices must lie in [1, {self.n}]")

    @property
    def k(self) -> int:
        return len(self.indices)

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64) - 1


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class Kernel:
    """A permutation-symmetric statistic, optionally consuming randomness.

    ``func`` is vectorised over leading axes: it receives an array whose last
    axis holds the k inputs and, for kernels with ``omega_values``, an array
    of omega draws broadcastable to the leading shape.  ``arity=None`` means
    the kernel accepts any number of inputs (a statistic of the whole sample).
    """

    name: str
    func: Callable[..., np.ndarray]
    arity: int | None = None
    omega_values: tuple[float, ...] = ()
    omega_probs: tuple[float, ...] = ()
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.omega_values) != len(self.omega_probs):
            raise DomainError("omega support and probabilities differ in length")
        if self.omega_probs and abs(math.fsum(self.omega_probs) - 1.0) > 1e-12:
            raise DomainError("omega probabilities must sum to 1")
        if self.arity is not None and self.arity < 1:
            raise DomainError("kernel arity must be positive")

    @property
    def uses_omega(self) -> bool:
        return bool(self.omega_values)

    def with_arity(self, k: int | None) -> "Kernel":
        return Kernel(self.name, self.func, k, self.omega_values, self.omega_probs, self.params)

    def omega_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms to omega draws by inverting the omega distribution."""
        cdf = np.cumsum(self.omega_probs)
        idx = np.searchsorted(cdf, u, side="right")
        idx = np.minimum(idx, len(self.omega_values) - 1)
        return np.asarray(self.omega_values, dtype=np.float64)[idx]

    def evaluate(self, x: np.ndarray, omega: np.ndarray | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.arity is not None and x.shape[-1] != self.arity:
            raise DomainError(f"kernel {self.name!r} has arity {self.arity}, got {x.shape[-1]} inputs")
        if self.uses_omega:
            if omega is None:
                raise DomainError(f"kernel {self.name!r} needs omega draws")
            return np.asarray(self.func(x, np.asarray(omega, dtype=np.float64)), dtype=np.float64)
        return np.asarray(self.func(x), dtype=np.float64)

    def __call__(self, x, omega=None) -> float:
        return float(self.evaluate(np.asarray(x, dtype=np.float64), omega))


def require_no_omega(kernel: Kernel, where: str) -> None:
    if kernel.uses_omega:
        raise DomainError(f"{where} needs a kernel without auxiliary randomness, got {kernel.name!r}")


# ---------------------------------------------------------------------------
# randomness


def stable_id(label: str) -> int:
    """A 64-bit integer derived from a string, stable across processes and platforms."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RandomnessPolicy:
    """Derives independent, order-free random streams from one master seed.

    Every stream is keyed by ``(master_seed, experiment, *indices)``, so a
    replicate's draws do not depend on which worker ran it or in which order.
    """

    master_seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise DomainError("master seed must be a 64-bit unsigned integer")

    def _entropy(self, experiment: str, indices: Sequence[int]) -> list[int]:
        return [int(self.master_seed), stable_id(experiment), *(int(i) for i in indices)]

    def generator(self, experiment: str = "", *indices: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self._entropy(experiment, indices))
        return np.random.Generator(np.random.PCG64(seq))

    def stream_key(self, experiment: str = "", *indices: int) -> int:
        key = 0
        for part in self._entropy(experiment, indices):
            key = _mix64((key ^ (part & _MASK64)) + 0x9E3779B97F4A7C15 & _MASK64)
        return key

    def rank_uniforms(self, experiment: str, replicate: int, ranks) -> np.ndarray:
        """One uniform per subsample rank, counter-based so any subset of ranks can be drawn."""
        return _backend.splitmix_uniforms(self.stream_key(experiment, replicate), np.asarray(ranks))


def as_generator(rng, experiment: str = "", *indices: int) -> np.random.Generator:
    """Accept a policy, a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomnessPolicy):
        return rng.generator(experiment, *indices)
    return RandomnessPolicy(DEFAULT_SEED if rng is None else int(rng)).generator(experiment, *indices)


def omega_for_ranks(kernel: Kernel, rng, experiment: str, replicate: int, ranks) -> np.ndarray | None:
    """Per-subsample omega draws, derived from each subsample's rank."""
    if not kernel.uses_omega:
        return None
    ranks = np.asarray(ranks, dtype=np.uint64)
    if isinstance(rng, RandomnessPolicy):
        u = rng.rank_uniforms(experiment, replicate, ranks)
    else:
        gen = as_generator(rng, experiment, replicate)
        key = int(gen.integers(0, 2**63)) * 2 + 1
        u = _backend.splitmix_uniforms(key, ranks)
    return kernel.omega_from_uniforms(u)


# ---------------------------------------------------------------------------
# combinatorics


def binom(n: int, k: int) -> int | float:
    """Binomial coefficient; exact integer up to n = 64, log-gamma based beyond."""
    n, k = int(n), int(k)
    if k < 0 or n < 0 or k > n:
        raise DomainError(f"binomial C({n}, {k}) needs 0 <= k <= n")
    if n <= EXACT_BINOM_MAX_N:
        return math.comb(n, k)
    return math.exp(log_binom(n, k))


def log_binom(n: int, k: int) -> float:
    if k < 0 or n < 0 or k > n:
        raise DomainError(f"binomial C({n}, {k}) needs 0 <= k <= n")
    if n <= EXACT_BINOM_MAX_N:
        return math.log(math.comb(n, k))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def binom_ratio(a: int, b: int, c: int, d: int) -> float:
    """``C(a, b) / C(c, d)`` as a float, without forming huge intermediates."""
    if max(a, c) <= EXACT_BINOM_MAX_N:
        return float(Fraction(math.comb(a, b), math.comb(c, d)))
    return math.exp(log_binom(a, b) - log_binom(c, d))


def binom0(n: int, k: int) -> int:
    """Exact binomial that is zero outside ``0 <= k <= n``."""
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def multinomial(counts: Sequence[int]) -> int:
    out = 1
    total = 0
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def bootstrap_weight_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Every bootstrap weight vector for sample size n with its probability.

    Returns ``(W, p)`` with ``W`` of shape ``(C(2n-1, n), n)`` in descending
    lexicographic order and ``p`` the multinomial probabilities.
    """
    n = int(n)
    if n < 2:
        raise DomainError("bootstrap enumeration needs n >= 2")
    if n > BOOTSTRAP_ENUM_CAP:
        raise CapacityError(
            f"exact bootstrap enumeration is capped at n <= {BOOTSTRAP_ENUM_CAP}, got n = {n}",
            BOOTSTRAP_ENUM_CAP,
        )
    W = _backend.compositions(n, n)
    return W, _multinomial_probs(W, n, n)


def _multinomial_probs(W: np.ndarray, draws: int, cells: int) -> np.ndarray:
    fact = [math.factorial(i) for i in range(draws + 1)]
    denom = cells**draws
    top = math.factorial(draws)
    probs = np.empty(W.shape[0])
    for r, row in enumerate(W.tolist()):
        c = top
        for v in row:
            c //= fact[v]
        probs[r] = c / denom  # int true division rounds correctly
    return probs


def enumerate_bootstrap_weights(n: int) -> Iterator[tuple[WeightVector, float]]:
    """Yield every bootstrap weight vector for size n with its probability."""
    W, p = bootstrap_weight_table(n)
    for row, prob in zip(W.tolist(), p.tolist()):
        yield WeightVector(tuple(row)), prob


def subset_table(n: int, k: int) -> np.ndarray:
    """All k-subsets of ``range(n)`` (0-based) in lexicographic order."""
    n, k = int(n), int(k)
    if not 1 <= k <= n:
        raise DomainError(f"subsets need 1 <= k <= n, got n = {n}, k = {k}")
    total = math.comb(n, k)
    if total > SUBSET_ENUM_CAP:
        raise CapacityError(
            f"C({n}, {k}) = {total} subsets exceeds the enumeration cap {SUBSET_ENUM_CAP}",
            SUBSET_ENUM_CAP,
        )
    return _backend.combinations(n, k)


def enumerate_subsets(n: int, k: int) -> Iterator[SubsetMask]:
    """Yield every k-subset of {1..n} once, in lexicographic order."""
    for row in subset_table(n, k).tolist():
        yield SubsetMask(tuple(i + 1 for i in row), n)
