"""Selects the stepping-kernel backend at import time.

The compiled extension (`trajkit._kernels`, Cython) is used when it built
successfully; otherwise the NumPy implementation takes over.  Set
TRAJKIT_FORCE_PYTHON_KERNELS=1 to force the fallback (used by the
cross-backend tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("TRAJKIT_FORCE_PYTHON_KERNELS"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND: str = kernels.BACKEND


def available_backends() -> dict:
    """Name -> kernel module, for benchmarks and equivalence tests."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
