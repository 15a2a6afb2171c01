"""Backend dispatch for the hot kernels.

Set XLQA_BACKEND=numpy to force the pure-numpy fallback, XLQA_BACKEND=numba
to require the compiled backend (ImportError if numba is missing).  Unset or
"auto": numba when importable, numpy otherwise.
"""

import os

from . import numpy_impl

_choice = os.environ.get("XLQA_BACKEND", "auto").lower()

if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"XLQA_BACKEND must be auto, numba or numpy, got {_choice!r}")

if _choice == "numpy":
    _impl = numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        _impl = numpy_impl
        BACKEND = "numpy"

depthwise_conv1d_fwd = _impl.depthwise_conv1d_fwd
depthwise_conv1d_bwd = _impl.depthwise_conv1d_bwd
conv1d_fwd = _impl.conv1d_fwd
conv1d_bwd = _impl.conv1d_bwd
band_argmax = _impl.band_argmax

__all__ = [
    "BACKEND",
    "band_argmax",
    "conv1d_bwd",
    "conv1d_fwd",
    "depthwise_conv1d_bwd",
    "depthwise_conv1d_fwd",
    "numpy_impl",
]
