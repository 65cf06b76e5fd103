"""Kernel backend selection.

Two interchangeable implementations of the hot kernels exist:

- ``numba_impl``: JIT-compiled loop nests (the default when numba imports).
- ``numpy_impl``: pure-numpy fallback with identical accumulation order.

``OBLIVINFER_BACKEND=numpy`` forces the fallback, ``=numba`` requires the JIT
backend (raising if numba is unavailable).  Forward kernels agree bitwise
across backends; backward kernels agree to float tolerance.  Scalar kernel
parameters are cast to the array dtype here so both backends see identical,
single-rounded operands.
"""

import os

import numpy as np

_choice = os.environ.get("OBLIVINFER_BACKEND", "").strip().lower()
if _choice not in ("", "numba", "numpy"):
    raise RuntimeError(
        "OBLIVINFER_BACKEND must be 'numba' or 'numpy', got %r" % (_choice,)
    )

if _choice == "numpy":
    from . import numpy_impl as _impl
else:
    try:
        from . import numba_impl as _impl
    except ImportError:
        if _choice == "numba":
            raise
        from . import numpy_impl as _impl

NAME = _impl.NAME


def _c(a):
    return np.ascontiguousarray(a)


def matmul(a, b):
    """(m,k) @ (k,n) with strictly p-ascending per-cell accumulation."""
    return _impl.matmul(_c(a), _c(b))


def threshold_leaky(x, thr, val):
    t = x.dtype.type
    return _impl.threshold_leaky(_c(x), t(thr), t(val))


def threshold_obl(x, thr, val):
    return _impl.threshold_obl(_c(x), np.float32(thr), np.float32(val))


def leakyrelu_leaky(x, slope):
    return _impl.leakyrelu_leaky(_c(x), x.dtype.type(slope))


def leakyrelu_obl(x, slope):
    return _impl.leakyrelu_obl(_c(x), np.float32(slope))


def hardtanh_leaky(x, lo, hi):
    t = x.dtype.type
    return _impl.hardtanh_leaky(_c(x), t(lo), t(hi))


def hardtanh_obl(x, lo, hi):
    return _impl.hardtanh_obl(_c(x), np.float32(lo), np.float32(hi))


def max_reduce_leaky(v):
    return _impl.max_reduce_leaky(_c(v))


def max_reduce_obl(v):
    return _impl.max_reduce_obl(_c(v))


def argmax_leaky(v):
    return int(_impl.argmax_leaky(_c(v)))


def argmax_obl(v):
    return int(_impl.argmax_obl(_c(v)))


def conv2d(x, w, bias, stride, padding):
    sh, sw = stride
    ph, pw = padding
    return _impl.conv2d(_c(x), _c(w), _c(bias), sh, sw, ph, pw)


def conv2d_dx(dy, w, stride, padding, in_hw):
    sh, sw = stride
    ph, pw = padding
    H, W = in_hw
    return _impl.conv2d_dx(_c(dy), _c(w), sh, sw, ph, pw, H, W)


def conv2d_dw(x, dy, kernel, stride, padding):
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    return _impl.conv2d_dw(_c(x), _c(dy), kh, kw, sh, sw, ph, pw)


def maxpool2d(x, window, stride):
    kh, kw = window
    sh, sw = stride
    return _impl.maxpool2d(_c(x), kh, kw, sh, sw)


def maxpool2d_obl(x, window, stride):
    kh, kw = window
    sh, sw = stride
    return _impl.maxpool2d_obl(_c(x), kh, kw, sh, sw)


def meanpool2d(x, window, stride):
    kh, kw = window
    sh, sw = stride
    return _impl.meanpool2d(_c(x), kh, kw, sh, sw)


def warm_up():
    """Trigger JIT compilation of the float32 kernel set (no-op on numpy)."""
    x1 = np.linspace(-1.0, 1.0, 8, dtype=np.float32)
    x4 = np.arange(2 * 2 * 4 * 4, dtype=np.float32).reshape(2, 2, 4, 4)
    w = np.ones((3, 2, 2, 2), np.float32)
    b = np.zeros(3, np.float32)
    matmul(x1.reshape(2, 4), x1.reshape(4, 2))
    threshold_leaky(x1, 0.0, 0.0)
    threshold_obl(x1, 0.0, 0.0)
    leakyrelu_leaky(x1, 0.01)
    leakyrelu_obl(x1, 0.01)
    hardtanh_leaky(x1, -1.0, 1.0)
    hardtanh_obl(x1, -1.0, 1.0)
    max_reduce_leaky(x1)
    max_reduce_obl(x1)
    argmax_leaky(x1)
    argmax_obl(x1)
    conv2d(x4, w, b, (1, 1), (0, 0))
    conv2d_dx(np.ones((2, 3, 3, 3), np.float32), w, (1, 1), (0, 0), (4, 4))
    conv2d_dw(x4, np.ones((2, 3, 3, 3), np.float32), (2, 2), (1, 1), (0, 0))
    maxpool2d(x4, (2, 2), (2, 2))
    maxpool2d_obl(x4, (2, 2), (2, 2))
    meanpool2d(x4, (2, 2), (2, 2))
