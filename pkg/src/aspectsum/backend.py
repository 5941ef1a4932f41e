"""Kernel backend selection.

``ASPECTSUM_BACKEND=numba`` (default when numba imports) runs the
JIT-compiled kernels; ``ASPECTSUM_BACKEND=numpy`` forces the pure-numpy
fallback.  Both expose the same functions and the choice is fixed at
import time.
"""

from __future__ import annotations

import os

from .errors import ConfigError

_ENV_VAR = "ASPECTSUM_BACKEND"

_requested = os.environ.get(_ENV_VAR, "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ConfigError(
        f"{_ENV_VAR} must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    from . import kernels_numpy as kernels

    BACKEND = "numpy"
else:
    try:
        from . import kernels_numba as kernels  # type: ignore[no-redef]

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import kernels_numpy as kernels  # type: ignore[no-redef]

        BACKEND = "numpy"

__all__ = ["BACKEND", "kernels"]
