"""Infinitesimal-jackknife variance estimates for bagged statistics and U-statistics."""

from __future__ import annotations

__version__ = "0.1.0"

from ._backend import BACKEND
from .core import (
    CapacityError,
    DomainError,
    Kernel,
    RandomnessPolicy,
    Sample,
    SubsetMask,
    WeightVector,
)
from .kernels import get_kernel
from .laws import DiscreteDistribution, NormalLaw, UniformLaw, law_from_dict

__all__ = [
    "BACKEND",
    "CapacityError",
    "DiscreteDistribution",
    "DomainError",
    "Kernel",
    "NormalLaw",
    "RandomnessPolicy",
    "Sample",
    "SubsetMask",
    "UniformLaw",
    "WeightVector",
    "__version__",
    "get_kernel",
    "law_from_dict",
]
