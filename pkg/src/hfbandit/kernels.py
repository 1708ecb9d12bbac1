"""Backend selection for the numerical kernels.

The compiled ``_core`` extension is used when it was built; otherwise, or
when ``HFBANDIT_PURE_PYTHON=1`` is set, the numpy fallback is used.
"""
from __future__ import annotations

import os

from . import _fallback

try:
    if os.environ.get("HFBANDIT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _core as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

project_sum_zero_box = _impl.project_sum_zero_box
mle_pga = _impl.mle_pga
box_qp = _impl.box_qp

BACKENDS = {"python": _fallback}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
else:
    try:
        from . import _core

        BACKENDS["cython"] = _core
    except ImportError:
        pass
