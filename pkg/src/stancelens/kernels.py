"""Backend selection for the numerical inner loops.

The compiled extension is used when it imports; otherwise, or when
``STANCELENS_BACKEND=python`` is set, the pure-Python twin is used.
"""
from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()


def available_backends() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "cython")
    return names


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module named ``name`` (default: the active one)."""
    if name is None:
        name = os.environ.get("STANCELENS_BACKEND", "auto").lower()
    if name == "auto":
        return _compiled if _compiled is not None else _pykernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .` or "
                              "`python setup.py build_ext --inplace`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def rng_state(seed: int) -> np.ndarray:
    """One-element uint64 state array for the kernels' splitmix64 generator."""
    return np.array([np.uint64(seed & ((1 << 64) - 1))], dtype=np.uint64)


def derive_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))
