"""Pure-numpy kernel backend.

Reference implementations of every hot kernel, written so that each output
element is accumulated in exactly the same order as the numba backend:
matmul strictly p-ascending, conv bias-first then taps in (ci, kh, kw)
ascending order, pools window-ascending.  Forward kernels are bitwise
interchangeable with the numba backend; backward kernels match to float
tolerance (their reductions use numpy/BLAS summation, which is deterministic
per process but not order-pinned).

Leaky variants compute through value-dependent selection the way a branchy
loop would; oblivious (``*_obl``) variants compute the identical bits through
mask-and-combine selection (see ``oblivinfer.obliv``).
"""

import numpy as np

from ..obliv import select_bits

NAME = "numpy"


def matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    c = np.zeros((m, n), dtype=a.dtype)
    for p in range(k):
        c += a[:, p, None] * b[p, None, :]
    return c


# elementwise activation kernels (1-d contiguous in, new array out)

def threshold_leaky(x, thr, val):
    t = x.dtype.type
    return np.where(x <= t(thr), t(val), x)


def threshold_obl(x, thr, val):
    t = x.dtype.type
    v = np.full_like(x, t(val))
    return select_bits(x <= t(thr), v, x)


def leakyrelu_leaky(x, slope):
    t = x.dtype.type
    return np.where(x <= t(0.0), x * t(slope), x)


def leakyrelu_obl(x, slope):
    t = x.dtype.type
    return select_bits(x <= t(0.0), x * t(slope), x)


def hardtanh_leaky(x, lo, hi):
    t = x.dtype.type
    return np.where(x < t(lo), t(lo), np.where(x <= t(hi), x, t(hi)))


def hardtanh_obl(x, lo, hi):
    t = x.dtype.type
    lo_arr = np.full_like(x, t(lo))
    hi_arr = np.full_like(x, t(hi))
    return select_bits(x < t(lo), lo_arr, select_bits(x <= t(hi), x, hi_arr))


# scan reductions (first strict maximum wins, matching `if v[i] > m`)

def max_reduce_leaky(v):
    m = v[0]
    for i in range(1, v.shape[0]):
        if v[i] > m:
            m = v[i]
    return m


def max_reduce_obl(v):
    m = np.ascontiguousarray(v[0:1])
    for i in range(1, v.shape[0]):
        m = select_bits(v[i:i + 1] > m, v[i:i + 1], m)
    return m[0]


def argmax_leaky(v):
    m = v[0]
    idx = 0
    for i in range(1, v.shape[0]):
        if v[i] > m:
            m = v[i]
            idx = i
    return idx


def argmax_obl(v):
    m = np.ascontiguousarray(v[0:1])
    idx = np.zeros(1, np.uint64)
    full = np.uint64(0xFFFFFFFFFFFFFFFF)
    for i in range(1, v.shape[0]):
        upd = v[i:i + 1] > m
        m = select_bits(upd, v[i:i + 1], m)
        w = upd.astype(np.uint64) * full
        idx = (np.uint64(i) & w) | (idx & ~w)
    return int(idx[0])


# spatial kernels on (B, C, H, W)

def _pad(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=x.dtype)
    xp[:, :, ph:ph + H, pw:pw + W] = x
    return xp


def conv2d(x, w, bias, sh, sw, ph, pw):
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    oh = (H + 2 * ph - kh) // sh + 1
    ow = (W + 2 * pw - kw) // sw + 1
    xp = _pad(x, ph, pw)
    out = np.empty((B, O, oh, ow), dtype=x.dtype)
    out[:] = bias[None, :, None, None]
    for ci in range(C):
        for u in range(kh):
            for v in range(kw):
                patch = xp[:, ci, u:u + sh * oh:sh, v:v + sw * ow:sw]
                out += patch[:, None, :, :] * w[None, :, ci, u, v, None, None]
    return out


def conv2d_dx(dy, w, sh, sw, ph, pw, H, W):
    B, O, oh, ow = dy.shape
    _, C, kh, kw = w.shape
    dxp = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=dy.dtype)
    for o in range(O):
        for u in range(kh):
            for v in range(kw):
                dxp[:, :, u:u + sh * oh:sh, v:v + sw * ow:sw] += (
                    dy[:, o, None, :, :] * w[o, :, u, v][None, :, None, None]
                )
    return dxp[:, :, ph:ph + H, pw:pw + W].copy()


def conv2d_dw(x, dy, kh, kw, sh, sw, ph, pw):
    B, C, H, W = x.shape
    O, oh, ow = dy.shape[1], dy.shape[2], dy.shape[3]
    xp = _pad(x, ph, pw)
    dw = np.empty((O, C, kh, kw), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            patch = xp[:, :, u:u + sh * oh:sh, v:v + sw * ow:sw]
            dw[:, :, u, v] = np.tensordot(dy, patch, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    return dw, db


def maxpool2d(x, kh, kw, sh, sw):
    """Running-max scan over each window; returns (out, flat spatial argmax).

    Strict-greater update: the first occurrence of the window maximum wins,
    both for the value and for the recorded index.
    """
    B, C, H, W = x.shape
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    out = np.empty((B, C, oh, ow), dtype=x.dtype)
    arg = np.empty((B, C, oh, ow), dtype=np.int64)
    first = True
    for u in range(kh):
        for v in range(kw):
            patch = x[:, :, u:u + sh * oh:sh, v:v + sw * ow:sw]
            iy = np.arange(oh) * sh + u
            ix = np.arange(ow) * sw + v
            flat = iy[:, None] * W + ix[None, :]
            if first:
                out[:] = patch
                arg[:] = flat
                first = False
            else:
                upd = patch > out
                out = np.where(upd, patch, out)
                arg = np.where(upd, flat, arg)
    return out, arg


def maxpool2d_obl(x, kh, kw, sh, sw):
    B, C, H, W = x.shape
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    out = np.empty((B, C, oh, ow), dtype=x.dtype)
    first = True
    for u in range(kh):
        for v in range(kw):
            patch = x[:, :, u:u + sh * oh:sh, v:v + sw * ow:sw]
            if first:
                out[:] = patch
                first = False
            else:
                out = select_bits(patch > out, np.ascontiguousarray(patch), out)
    return out


def meanpool2d(x, kh, kw, sh, sw):
    B, C, H, W = x.shape
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    acc = np.zeros((B, C, oh, ow), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            acc += x[:, :, u:u + sh * oh:sh, v:v + sw * ow:sw]
    return acc / x.dtype.type(kh * kw)
