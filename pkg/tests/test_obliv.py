"""Branchless selection primitives: bit-exactness and branch-freedom."""

import numpy as np
import pytest

from oblivinfer.obliv import (
    CT_FALSE,
    CT_TRUE,
    CtBool,
    ct_argmax,
    ct_clamp,
    ct_ge,
    ct_gt,
    ct_le,
    ct_lt,
    ct_max,
    ct_select,
    mask_from_bool,
    select_bits,
)


def test_ctbool_refuses_control_flow():
    with pytest.raises(TypeError):
        if ct_le(1.0, 2.0):
            pass
    with pytest.raises(TypeError):
        bool(CT_TRUE)


def test_ctbool_reveal():
    assert CT_TRUE.reveal() is True
    assert CT_FALSE.reveal() is False
    assert ct_lt(1.0, 2.0).reveal() is True
    assert ct_lt(2.0, 1.0).reveal() is False


def test_mask_values():
    assert int(CT_TRUE.mask) == 0xFFFFFFFF
    assert int(CT_FALSE.mask) == 0
    assert int(ct_gt(3.0, 1.0).mask) == 0xFFFFFFFF


@pytest.mark.parametrize("a,b", [(1.0, 2.0), (2.0, 1.0), (1.5, 1.5), (-0.0, 0.0)])
def test_comparisons_match_python(a, b):
    fa, fb = np.float32(a), np.float32(b)
    assert ct_lt(a, b).reveal() == (fa < fb)
    assert ct_le(a, b).reveal() == (fa <= fb)
    assert ct_gt(a, b).reveal() == (fa > fb)
    assert ct_ge(a, b).reveal() == (fa >= fb)


def test_select_returns_exact_bits():
    specials = [np.float32(x) for x in
                (0.0, -0.0, 1.0, -1.0, 1e-40, np.inf, -np.inf, 3.14159)]
    for a in specials:
        for b in specials:
            sa = ct_select(CT_TRUE, a, b)
            sb = ct_select(CT_FALSE, a, b)
            assert sa.tobytes() == a.tobytes()
            assert sb.tobytes() == b.tobytes()


def test_select_random_bits(rng):
    for a, b in rng.standard_normal((100, 2)).astype(np.float32):
        c = ct_gt(a, b)
        want = a if a > b else b
        assert ct_select(c, a, b).tobytes() == np.float32(want).tobytes()


def test_ct_max_matches_branchy_scan(rng):
    for a, b in rng.standard_normal((200, 2)).astype(np.float32):
        want = a if a > b else b
        assert ct_max(a, b).tobytes() == np.float32(want).tobytes()


def test_ct_max_tie_keeps_second():
    # distinct bit patterns that compare equal
    pz, nz = np.float32(0.0), np.float32(-0.0)
    assert ct_max(pz, nz).tobytes() == nz.tobytes()
    assert ct_max(nz, pz).tobytes() == pz.tobytes()


def test_ct_clamp_matches_branchy(rng):
    lo, hi = np.float32(-0.5), np.float32(0.75)
    for x in rng.uniform(-2, 2, 300).astype(np.float32):
        if x < lo:
            want = lo
        elif x <= hi:
            want = x
        else:
            want = hi
        assert ct_clamp(x, lo, hi).tobytes() == np.float32(want).tobytes()


def test_ct_clamp_boundaries():
    lo, hi = np.float32(-1.0), np.float32(1.0)
    assert ct_clamp(lo, lo, hi) == lo
    assert ct_clamp(hi, lo, hi) == hi


def test_ct_argmax_first_max_wins(rng):
    for _ in range(50):
        v = rng.integers(-3, 4, size=rng.integers(1, 12)).astype(np.float32)
        branchy = 0
        for i in range(1, len(v)):
            if v[i] > v[branchy]:
                branchy = i
        assert ct_argmax(v) == branchy == int(np.argmax(v))


def test_ct_argmax_duplicates():
    assert ct_argmax([2.0, 5.0, 5.0, 1.0]) == 1
    assert ct_argmax([7.0]) == 0
    assert ct_argmax([1.0, 1.0, 1.0]) == 0


def test_ct_argmax_empty():
    with pytest.raises(ValueError):
        ct_argmax([])


def test_mask_from_bool_dtypes():
    cond = np.array([True, False, True])
    m32 = mask_from_bool(cond, np.float32)
    m64 = mask_from_bool(cond, np.float64)
    assert m32.dtype == np.uint32 and m64.dtype == np.uint64
    assert list(m32) == [0xFFFFFFFF, 0, 0xFFFFFFFF]
    assert list(m64) == [0xFFFFFFFFFFFFFFFF, 0, 0xFFFFFFFFFFFFFFFF]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_select_bits_matches_where(rng, dtype):
    a = rng.standard_normal(64).astype(dtype)
    b = rng.standard_normal(64).astype(dtype)
    cond = rng.random(64) < 0.5
    out = select_bits(cond, a, b)
    assert out.dtype == a.dtype
    assert out.tobytes() == np.where(cond, a, b).astype(dtype).tobytes()


def test_select_bits_strided_input(rng):
    base = rng.standard_normal((8, 8)).astype(np.float32)
    a = base[:, ::2]  # non-contiguous view
    b = np.zeros_like(a)
    cond = a > 0
    out = select_bits(cond, a, b)
    assert np.array_equal(out, np.where(cond, a, b))


def test_select_bits_preserves_signed_zero():
    a = np.array([-0.0], np.float32)
    b = np.array([0.0], np.float32)
    taken = select_bits(np.array([True]), a, b)
    dropped = select_bits(np.array([False]), a, b)
    assert np.signbit(taken[0])
    assert not np.signbit(dropped[0])
