"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set BUDGETBOOST_PURE=1 to force the pure-python kernels (used by the
benchmark and for debugging).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("BUDGETBOOST_PURE", "") in ("1", "true", "yes"):
    _impl = _kernels_py
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _kernels_py

USING_EXTENSION = bool(getattr(_impl, "USING_EXTENSION", False))
best_split = _impl.best_split
weighted_risk = _impl.weighted_risk
risk_at_alpha = _impl.risk_at_alpha
