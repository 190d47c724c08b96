"""Backend selection for the lattice sweep.

The compiled extension is used when it imports; setting ``STOCHHJ_PURE=1``
forces the NumPy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
dp_sweep = _kernels_py.dp_sweep

if os.environ.get("STOCHHJ_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        dp_sweep = _compiled.dp_sweep
        BACKEND = "cython"


def get_backend(name: str):
    """Return the sweep function of a named backend ('cython' or 'python')."""
    if name == "python":
        return _kernels_py.dp_sweep
    if name == "cython":
        from . import _kernels
        return _kernels.dp_sweep
    raise ValueError(f"unknown backend {name!r}")
