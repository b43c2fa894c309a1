"""Selects the convolution kernel implementation at import time.

Preference order: the compiled extension (didd._convcore), then the NumPy
fallback. Set DIDD_KERNELS=numpy or DIDD_KERNELS=compiled to force one; with
"compiled" an ImportError propagates instead of falling back.
"""

import os
import warnings

_pref = os.environ.get("DIDD_KERNELS", "auto").strip().lower()
if _pref not in ("auto", "compiled", "numpy"):
    raise ValueError(f"DIDD_KERNELS must be auto, compiled or numpy, got {_pref!r}")

if _pref == "numpy":
    from . import _convcore_np as _impl
else:
    try:
        from . import _convcore as _impl  # type: ignore[no-redef]
    except ImportError:
        if _pref == "compiled":
            raise
        warnings.warn(
            "didd._convcore extension not built; using the slower NumPy kernels",
            RuntimeWarning,
        )
        from . import _convcore_np as _impl  # type: ignore[no-redef]

KERNEL_IMPL = _impl.KERNEL_IMPL
im2col = _impl.im2col
col2im = _impl.col2im
