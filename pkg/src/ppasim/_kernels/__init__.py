"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports cleanly. Setting
``PPASIM_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("PPASIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend

BACKEND = "cython" if compiled_backend is not None and _active is compiled_backend else "python"

arma_css = _active.arma_css
arma_filter = _active.arma_filter
arma_grid = _active.arma_grid

__all__ = ["BACKEND", "arma_css", "arma_filter", "arma_grid", "python_backend", "compiled_backend"]
