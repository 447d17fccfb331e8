"""Selects the compiled kernels when available, else the numpy fallback.

Set ``IJVAR_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

if os.environ.get("IJVAR_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        from . import _pykernels as impl

        BACKEND = "python"

compositions = impl.compositions
combinations = impl.combinations
rank_combinations = impl.rank_combinations
unrank_combinations = impl.unrank_combinations
scatter_sums = impl.scatter_sums
pair_sums = impl.pair_sums
splitmix_uniforms = impl.splitmix_uniforms

__all__ = [
    "BACKEND",
    "combinations",
    "compositions",
    "pair_sums",
    "rank_combinations",
    "scatter_sums",
    "splitmix_uniforms",
    "unrank_combinations",
]
