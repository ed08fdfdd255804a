"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
kernels take over. Setting ``HTERQE_PURE_PYTHON=1`` forces the fallback.
Both backends produce identical results.
"""

import os

if os.environ.get("HTERQE_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as kernels
        BACKEND = "python"

levenshtein = kernels.levenshtein
edit_ops = kernels.edit_ops
best_shift = kernels.best_shift
split_scan = kernels.split_scan

__all__ = ["BACKEND", "kernels", "levenshtein", "edit_ops", "best_shift", "split_scan"]
