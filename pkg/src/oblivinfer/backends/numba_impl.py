"""numba JIT kernel backend.

Loop nests are written so every output element accumulates in exactly the
order the numpy backend uses (matmul p-ascending with j inner, conv bias
first then (ci, kh, kw) taps against a zero-padded buffer, pools window
ascending).  No fastmath, no parallel reductions: the compiled code must not
reassociate floating-point accumulation, so results are bitwise reproducible
and bitwise equal to the fallback backend for all forward kernels.

Scalar operands arrive pre-cast to the array dtype (see the package wrapper),
keeping float32 paths single-rounded.  Oblivious variants are float32-only;
they bit-select through uint32 views of one-element scratch arrays since
scalars cannot be reinterpreted directly here.
"""

import numpy as np
from numba import njit

NAME = "numba"

_FULL32 = np.uint32(0xFFFFFFFF)


@njit(cache=True)
def matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    c = np.zeros((m, n), a.dtype)
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return c


@njit(cache=True)
def threshold_leaky(x, thr, val):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        xi = x[i]
        if xi <= thr:
            out[i] = val
        else:
            out[i] = xi
    return out


@njit(cache=True)
def threshold_obl(x, thr, val):
    out = np.empty_like(x)
    xb = x.view(np.uint32)
    ob = out.view(np.uint32)
    tmp = np.empty(1, np.float32)
    tmp[0] = val
    vbits = tmp.view(np.uint32)[0]
    for i in range(x.shape[0]):
        m = np.uint32(0) - np.uint32(x[i] <= thr)
        ob[i] = (vbits & m) | (xb[i] & (m ^ _FULL32))
    return out


@njit(cache=True)
def leakyrelu_leaky(x, slope):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        xi = x[i]
        if xi <= 0.0:
            out[i] = xi * slope
        else:
            out[i] = xi
    return out


@njit(cache=True)
def leakyrelu_obl(x, slope):
    out = np.empty_like(x)
    xb = x.view(np.uint32)
    ob = out.view(np.uint32)
    tmp = np.empty(1, np.float32)
    tu = tmp.view(np.uint32)
    for i in range(x.shape[0]):
        tmp[0] = x[i] * slope
        m = np.uint32(0) - np.uint32(x[i] <= 0.0)
        ob[i] = (tu[0] & m) | (xb[i] & (m ^ _FULL32))
    return out


@njit(cache=True)
def hardtanh_leaky(x, lo, hi):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        xi = x[i]
        if xi < lo:
            out[i] = lo
        elif xi <= hi:
            out[i] = xi
        else:
            out[i] = hi
    return out


@njit(cache=True)
def hardtanh_obl(x, lo, hi):
    out = np.empty_like(x)
    xb = x.view(np.uint32)
    ob = out.view(np.uint32)
    tmp = np.empty(2, np.float32)
    tu = tmp.view(np.uint32)
    tmp[0] = lo
    tmp[1] = hi
    lbits = tu[0]
    hbits = tu[1]
    for i in range(x.shape[0]):
        inner = (xb[i] & (np.uint32(0) - np.uint32(x[i] <= hi))) | (
            hbits & ((np.uint32(0) - np.uint32(x[i] <= hi)) ^ _FULL32)
        )
        m = np.uint32(0) - np.uint32(x[i] < lo)
        ob[i] = (lbits & m) | (inner & (m ^ _FULL32))
    return out


@njit(cache=True)
def max_reduce_leaky(v):
    m = v[0]
    for i in range(1, v.shape[0]):
        if v[i] > m:
            m = v[i]
    return m


@njit(cache=True)
def max_reduce_obl(v):
    tmp = np.empty(2, np.float32)
    tu = tmp.view(np.uint32)
    tmp[0] = v[0]
    for i in range(1, v.shape[0]):
        tmp[1] = v[i]
        m = np.uint32(0) - np.uint32(v[i] > tmp[0])
        tu[0] = (tu[1] & m) | (tu[0] & (m ^ _FULL32))
    return tmp[0]


@njit(cache=True)
def argmax_leaky(v):
    m = v[0]
    idx = 0
    for i in range(1, v.shape[0]):
        if v[i] > m:
            m = v[i]
            idx = i
    return idx


@njit(cache=True)
def argmax_obl(v):
    tmp = np.empty(2, np.float32)
    tu = tmp.view(np.uint32)
    tmp[0] = v[0]
    idx = np.uint64(0)
    full = np.uint64(0xFFFFFFFFFFFFFFFF)
    for i in range(1, v.shape[0]):
        tmp[1] = v[i]
        c = np.uint64(0) - np.uint64(v[i] > tmp[0])
        m32 = np.uint32(0) - np.uint32(v[i] > tmp[0])
        tu[0] = (tu[1] & m32) | (tu[0] & (m32 ^ _FULL32))
        idx = (np.uint64(i) & c) | (idx & (c ^ full))
    return int(idx)


@njit(cache=True)
def _padded(x, ph, pw):
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2 * ph, W + 2 * pw), x.dtype)
    xp[:, :, ph:ph + H, pw:pw + W] = x
    return xp


@njit(cache=True)
def conv2d(x, w, bias, sh, sw, ph, pw):
    B, C, H, W = x.shape
    O, C2, kh, kw = w.shape
    oh = (H + 2 * ph - kh) // sh + 1
    ow = (W + 2 * pw - kw) // sw + 1
    xp = _padded(x, ph, pw)
    out = np.empty((B, O, oh, ow), x.dtype)
    for b in range(B):
        for o in range(O):
            for oy in range(oh):
                for ox in range(ow):
                    acc = bias[o]
                    for ci in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[b, ci, oy * sh + u, ox * sw + v] * w[o, ci, u, v]
                    out[b, o, oy, ox] = acc
    return out


@njit(cache=True)
def conv2d_dx(dy, w, sh, sw, ph, pw, H, W):
    B, O, oh, ow = dy.shape
    O2, C, kh, kw = w.shape
    dx = np.zeros((B, C, H, W), dy.dtype)
    for b in range(B):
        for ci in range(C):
            for iy in range(H):
                for ix in range(W):
                    acc = dx[b, ci, iy, ix]
                    py = iy + ph
                    px = ix + pw
                    for o in range(O):
                        for u in range(kh):
                            ty = py - u
                            if ty < 0 or ty % sh != 0:
                                continue
                            oy = ty // sh
                            if oy >= oh:
                                continue
                            for v in range(kw):
                                tx = px - v
                                if tx < 0 or tx % sw != 0:
                                    continue
                                ox = tx // sw
                                if ox >= ow:
                                    continue
                                acc += dy[b, o, oy, ox] * w[o, ci, u, v]
                    dx[b, ci, iy, ix] = acc
    return dx


@njit(cache=True)
def conv2d_dw(x, dy, kh, kw, sh, sw, ph, pw):
    B, C, H, W = x.shape
    O = dy.shape[1]
    oh = dy.shape[2]
    ow = dy.shape[3]
    xp = _padded(x, ph, pw)
    dw = np.zeros((O, C, kh, kw), x.dtype)
    db = np.zeros(O, x.dtype)
    for o in range(O):
        for ci in range(C):
            for u in range(kh):
                for v in range(kw):
                    acc = dw[o, ci, u, v]
                    for b in range(B):
                        for oy in range(oh):
                            for ox in range(ow):
                                acc += dy[b, o, oy, ox] * xp[b, ci, oy * sh + u, ox * sw + v]
                    dw[o, ci, u, v] = acc
    for o in range(O):
        acc = db[o]
        for b in range(B):
            for oy in range(oh):
                for ox in range(ow):
                    acc += dy[b, o, oy, ox]
        db[o] = acc
    return dw, db


@njit(cache=True)
def maxpool2d(x, kh, kw, sh, sw):
    B, C, H, W = x.shape
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    out = np.empty((B, C, oh, ow), x.dtype)
    arg = np.empty((B, C, oh, ow), np.int64)
    for b in range(B):
        for c in range(C):
            for oy in range(oh):
                for ox in range(ow):
                    iy0 = oy * sh
                    ix0 = ox * sw
                    m = x[b, c, iy0, ix0]
                    ai = iy0 * W + ix0
                    for u in range(kh):
                        for v in range(kw):
                            if u == 0 and v == 0:
                                continue
                            val = x[b, c, iy0 + u, ix0 + v]
                            if val > m:
                                m = val
                                ai = (iy0 + u) * W + ix0 + v
                    out[b, c, oy, ox] = m
                    arg[b, c, oy, ox] = ai
    return out, arg


@njit(cache=True)
def maxpool2d_obl(x, kh, kw, sh, sw):
    B, C, H, W = x.shape
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    out = np.empty((B, C, oh, ow), np.float32)
    tmp = np.empty(2, np.float32)
    tu = tmp.view(np.uint32)
    for b in range(B):
        for c in range(C):
            for oy in range(oh):
                for ox in range(ow):
                    iy0 = oy * sh
                    ix0 = ox * sw
                    tmp[0] = x[b, c, iy0, ix0]
                    for u in range(kh):
                        for v in range(kw):
                            if u == 0 and v == 0:
                                continue
                            val = x[b, c, iy0 + u, ix0 + v]
                            tmp[1] = val
                            m = np.uint32(0) - np.uint32(val > tmp[0])
                            tu[0] = (tu[1] & m) | (tu[0] & (m ^ _FULL32))
                    out[b, c, oy, ox] = tmp[0]
    return out


@njit(cache=True)
def meanpool2d(x, kh, kw, sh, sw):
    B, C, H, W = x.shape
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    out = np.zeros((B, C, oh, ow), x.dtype)
    cnt = np.zeros(1, x.dtype)
    cnt[0] = kh * kw
    for b in range(B):
        for c in range(C):
            for oy in range(oh):
                for ox in range(ow):
                    acc = out[b, c, oy, ox]
                    for u in range(kh):
                        for v in range(kw):
                            acc += x[b, c, oy * sh + u, ox * sw + v]
                    out[b, c, oy, ox] = acc / cnt[0]
    return out
