"""Closed-form storage accounting."""

import pytest
from hypothesis import given, strategies as st

from tracks4d.archive import storage_estimate

TIB = 1024.0 ** 4
GIB = 1024.0 ** 3


def test_dense_blowup_at_production_scale():
    est = storage_estimate(512, 512, 300, 8, mode="dense")
    assert 2.0 <= est["bytes"] / TIB <= 2.2


def test_raw_rgb_baseline_at_production_scale():
    est = storage_estimate(512, 512, 300, 8, mode="rgb")
    assert 6.8 <= est["bytes"] / GIB <= 7.2


def test_compact_estimate_and_components():
    est = storage_estimate(512, 512, 300, 8, n_vertices=100_000,
                           mode="compact")
    assert abs(est["bytes"] / GIB - 9.3) <= 0.1 * 9.3
    assert est["pixel_record_bytes"] == 16 * 512 * 512 * 300 * 8
    assert est["vertex_track_bytes"] == 12 * 100_000 * 300
    assert est["bytes"] == est["pixel_record_bytes"] + est["vertex_track_bytes"]


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        storage_estimate(0, 512, 300, 8)
    with pytest.raises(ValueError):
        storage_estimate(4, 4, 2, 1, mode="sparse")


@given(h=st.integers(1, 256), w=st.integers(1, 256), t=st.integers(1, 64),
       c=st.integers(1, 16), v=st.integers(0, 10_000))
def test_formula_identities(h, w, t, c, v):
    n = t * c
    assert storage_estimate(h, w, t, c, mode="dense")["bytes"] == 12 * h * w * t * n
    assert storage_estimate(h, w, t, c, mode="rgb")["bytes"] == 12 * h * w * n
    compact = storage_estimate(h, w, t, c, n_vertices=v, mode="compact")
    assert compact["bytes"] == 16 * h * w * n + 12 * v * t
