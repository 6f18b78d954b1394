"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``PARAMODEL_PURE=1`` to
force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

PURE_ENV = "PARAMODEL_PURE"

_backend = _kernels_py
BACKEND = "python"
if os.environ.get(PURE_ENV, "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _backend  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _backend = _kernels_py

trig_eval = _backend.trig_eval
window_bilinear_sum = _backend.window_bilinear_sum
pair_sector_ratios = _backend.pair_sector_ratios
