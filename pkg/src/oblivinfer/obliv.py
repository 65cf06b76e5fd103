"""Branchless selection primitives.

Every primitive in this module computes its result by mask-and-combine on the
IEEE-754 bit pattern of its operands, never by control flow on a data value.
A comparison yields a :class:`CtBool`, an opaque all-zeros / all-ones machine
mask; ``ct_select`` combines the two candidate bit patterns under that mask
and therefore returns one of its operands *bit-exactly*.  This is the software
analogue of a conditional-move instruction: the executed instruction sequence,
and hence the memory-access trace, is identical for both outcomes.

Python itself evaluates these functions eagerly with no data-dependent branch,
so a kernel built only from these primitives touches the same addresses in the
same order regardless of the secret values flowing through it.

Comparisons follow the reference kernels' operator choices exactly:
``ct_max`` keeps the incumbent on ties (strict ``>`` update) and ``ct_clamp``
splits its arms as ``x < lo`` / ``x <= hi``.  NaN operands are a precondition
violation; IEEE comparisons with NaN are false, so NaNs fall through to the
"else" operand rather than raising.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "CtBool",
    "CT_TRUE",
    "CT_FALSE",
    "ct_lt",
    "ct_le",
    "ct_gt",
    "ct_ge",
    "ct_select",
    "ct_max",
    "ct_clamp",
    "ct_argmax",
    "mask_from_bool",
    "select_bits",
]

_FULL = np.uint32(0xFFFFFFFF)


class CtBool:
    """Opaque branchless boolean: a 32-bit all-zeros or all-ones mask.

    Instances must never drive Python control flow; ``bool(ctb)`` raises so
    an accidental ``if ct_le(...):`` fails loudly instead of silently
    reintroducing a secret-dependent branch.
    """

    __slots__ = ("mask",)

    def __init__(self, mask: np.uint32):
        self.mask = np.uint32(mask)

    def __bool__(self):
        raise TypeError("CtBool must not drive control flow; use ct_select")

    def __repr__(self):
        return f"CtBool(0x{int(self.mask):08x})"

    def reveal(self) -> bool:
        """Explicitly declassify the mask (test and assertion use only)."""
        return bool(self.mask)


CT_TRUE = CtBool(_FULL)
CT_FALSE = CtBool(np.uint32(0))


def _from_py_bool(b) -> CtBool:
    # all-ones times 0 or 1; arithmetic, not a branch
    return CtBool(_FULL * np.uint32(bool(b)))


def ct_lt(a, b) -> CtBool:
    return _from_py_bool(np.float32(a) < np.float32(b))


def ct_le(a, b) -> CtBool:
    return _from_py_bool(np.float32(a) <= np.float32(b))


def ct_gt(a, b) -> CtBool:
    return _from_py_bool(np.float32(a) > np.float32(b))


def ct_ge(a, b) -> CtBool:
    return _from_py_bool(np.float32(a) >= np.float32(b))


def ct_select(cond: CtBool, a, b) -> np.float32:
    """Return ``a`` if cond else ``b``, chosen by bit masking.

    The result is bit-identical to the chosen operand (signed zeros and
    denormals survive unchanged).
    """
    abits = np.float32(a).view(np.uint32)
    bbits = np.float32(b).view(np.uint32)
    out = np.uint32((abits & cond.mask) | (bbits & ~cond.mask))
    return out.view(np.float32)


def _select_u32(cond: CtBool, a, b) -> np.uint32:
    return np.uint32((np.uint32(a) & cond.mask) | (np.uint32(b) & ~cond.mask))


def ct_max(a, b) -> np.float32:
    """max(a, b) with the strict-greater update rule: ties keep ``b``."""
    return ct_select(ct_gt(a, b), a, b)


def ct_clamp(x, lo, hi) -> np.float32:
    """Clamp to [lo, hi] with the arm split ``x < lo`` / ``x <= hi``."""
    return ct_select(ct_lt(x, lo), lo, ct_select(ct_le(x, hi), x, hi))


def ct_argmax(v) -> int:
    """Index of the first strict maximum of a nonempty 1-d float sequence.

    The running (max, index) pair is updated only through ``ct_select``; the
    scan order and access pattern are fixed left to right regardless of the
    values.  Tie-breaking matches a branchy ``if v[i] > m`` scan: the first
    occurrence of the maximum wins.
    """
    v = np.asarray(v, dtype=np.float32).reshape(-1)
    if v.size == 0:
        raise ValueError("ct_argmax of an empty sequence")
    m = np.float32(v[0])
    idx = np.uint32(0)
    for i in range(1, v.size):
        c = ct_gt(v[i], m)
        m = ct_select(c, v[i], m)
        idx = _select_u32(c, np.uint32(i), idx)
    return int(idx)


# Array counterparts used by the vectorized kernels.  Same bit trick, applied
# elementwise; dtype dispatch covers the engine dtype (float32) and the
# float64 shadow path used by gradient checking.

_UINT_FOR = {np.dtype(np.float32): np.uint32, np.dtype(np.float64): np.uint64}


def mask_from_bool(cond: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Elementwise all-zeros/all-ones masks for a boolean array."""
    u = _UINT_FOR[np.dtype(dtype)]
    return u(0) - cond.astype(u)


def select_bits(cond: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized ``ct_select``: where(cond, a, b) by mask-and-combine."""
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    u = _UINT_FOR[a.dtype]
    m = mask_from_bool(np.asarray(cond), a.dtype)
    out = (a.view(u) & m) | (b.view(u) & ~m)
    return out.view(a.dtype)
