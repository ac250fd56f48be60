"""Quantized per-pixel barycentric records."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracks4d.barymap import (ALPHA_SCALE, INVALID_FACE, STATIC_FACE, BaryMap,
                              dequantize_alpha, quantize_alpha)


def test_quantize_bound():
    # worst-case reconstruction error of a u16 grid on the simplex
    alpha = np.array([[1 / 3, 1 / 3, 1 / 3], [0.9999, 0.0001, 0.0]])
    q1, q2 = quantize_alpha(alpha)
    back = dequantize_alpha(q1, q2)
    assert np.all(np.abs(back - alpha) <= 1.0 / ALPHA_SCALE)


def test_quantized_weights_stay_on_simplex():
    alpha = np.array([[0.5, 0.49999, 1e-5]])
    q1, q2 = quantize_alpha(alpha)
    assert int(q1[0]) + int(q2[0]) <= int(ALPHA_SCALE)
    back = dequantize_alpha(q1, q2)
    assert back[0].sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(back >= -1e-12)


def test_sentinels_are_distinct_and_out_of_face_range():
    assert INVALID_FACE != STATIC_FACE
    assert INVALID_FACE > 2**31 and STATIC_FACE > 2**31


def test_from_float_and_masks():
    face = np.array([[0, STATIC_FACE], [INVALID_FACE, 3]], dtype=np.uint32)
    alpha = np.zeros((2, 2, 3))
    alpha[..., 0] = 1.0
    bm = BaryMap.from_float(face, alpha)
    assert bm.dynamic.tolist() == [[True, False], [False, True]]
    assert bm.static.tolist() == [[False, True], [False, False]]
    assert bm.invalid.tolist() == [[False, False], [True, False]]


def test_bytes_round_trip_exact():
    rng = np.random.default_rng(7)
    face = rng.integers(0, 1000, (5, 4)).astype(np.uint32)
    face[0, 0] = INVALID_FACE
    face[1, 1] = STATIC_FACE
    a = rng.dirichlet(np.ones(3), (5, 4))
    bm = BaryMap.from_float(face, a)
    back = BaryMap.from_bytes(bm.to_bytes(), 5, 4)
    assert np.array_equal(back.face, bm.face)
    assert np.array_equal(back.q1, bm.q1)
    assert np.array_equal(back.q2, bm.q2)


def test_bytes_layout_is_eight_per_pixel_little_endian():
    face = np.array([[7]], dtype=np.uint32)
    bm = BaryMap.from_float(face, np.array([[[0.25, 0.5, 0.25]]]))
    raw = bm.to_bytes()
    assert len(raw) == 8
    words = np.frombuffer(raw, dtype="<u4")
    assert words[0] == 7
    q1 = words[1] & 0xFFFF
    q2 = words[1] >> 16
    assert q1 == round(0.25 * ALPHA_SCALE)
    assert q2 == round(0.5 * ALPHA_SCALE)


def test_from_bytes_rejects_bad_length():
    with pytest.raises(ValueError):
        BaryMap.from_bytes(b"\x00" * 12, 2, 2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
def test_quantization_error_bound_property(raw):
    a1, frac = raw
    a2 = (1.0 - a1) * frac
    alpha = np.array([[a1, a2, 1.0 - a1 - a2]])
    back = dequantize_alpha(*quantize_alpha(alpha))
    assert np.all(np.abs(back - alpha) <= 1.5 / ALPHA_SCALE)
    assert back.sum() == pytest.approx(1.0, abs=1e-12)
