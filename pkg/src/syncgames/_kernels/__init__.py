"""Batched matrix kernels with a compiled fast path.

The compiled extension is used when it was built; otherwise the numpy
implementation takes over transparently. Set ``SYNCGAMES_PURE=1`` in
the environment to force the fallback (the benchmark uses this to
compare the two).
"""
import os

from . import numpy_impl

if os.environ.get("SYNCGAMES_PURE") == "1":
    _impl = numpy_impl
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = numpy_impl

BACKEND = _impl.BACKEND
batch_mul = _impl.batch_mul
batch_mul_ha = _impl.batch_mul_ha
batch_mul_hb = _impl.batch_mul_hb
batch_axpy = _impl.batch_axpy
batch_frob_sq = _impl.batch_frob_sq
batch_trace = _impl.batch_trace
batch_add_identity = _impl.batch_add_identity

__all__ = ["BACKEND", "batch_mul", "batch_mul_ha", "batch_mul_hb",
           "batch_axpy", "batch_frob_sq", "batch_trace",
           "batch_add_identity"]
