"""Closest-point search: kernel geometry, BVH vs exhaustive scan."""

import numpy as np
import pytest

from tracks4d import _kernels
from tracks4d.fit import FaceAccel, brute_force_fit, fit_pixel
from tracks4d.mesh import AnimatedMesh, union_faces


def _sample_simplex_grid(n=60):
    """Dense grid over the 3-simplex, used as a slow geometric oracle."""
    ws = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            a = i / n
            b = j / n
            ws.append((a, b, 1.0 - a - b))
    return np.array(ws)


def _rand_mesh(rng, n_tris=40, object_id=1):
    base = rng.uniform(-2, 2, (n_tris, 3))
    verts = np.repeat(base, 3, axis=0) + rng.uniform(-0.4, 0.4, (3 * n_tris, 3))
    faces = np.arange(3 * n_tris).reshape(n_tris, 3)
    return AnimatedMesh(object_id=object_id, vertices=verts[None],
                        faces=faces, is_static=True)


def test_closest_point_on_triangle_matches_grid_oracle(rng):
    grid = _sample_simplex_grid()
    for _ in range(30):
        tri = rng.normal(size=(3, 3))
        p = rng.normal(size=3) * 2
        d2, w0, w1, w2 = _kernels.closest_point_on_triangle(
            tri[0], tri[1], tri[2], p)
        cand = grid @ tri  # (M, 3) points on the triangle
        oracle = np.min(np.sum((cand - p) ** 2, axis=1))
        # the analytic result can only beat the finite grid
        assert d2 <= oracle + 1e-9
        # and the returned weights reproduce the returned distance
        q = w0 * tri[0] + w1 * tri[1] + w2 * tri[2]
        assert np.sum((q - p) ** 2) == pytest.approx(d2, abs=1e-12)
        assert w0 + w1 + w2 == pytest.approx(1.0, abs=1e-9)
        assert min(w0, w1, w2) >= -1e-12


def test_closest_point_interior_projection():
    tri = np.array([[0, 0, 0], [4, 0, 0], [0, 4, 0]], float)
    d2, w0, w1, w2 = _kernels.closest_point_on_triangle(
        tri[0], tri[1], tri[2], np.array([1.0, 1.0, 2.0]))
    assert d2 == pytest.approx(4.0, abs=1e-12)  # plane distance only
    assert (w0, w1, w2) == pytest.approx((0.5, 0.25, 0.25), abs=1e-12)


def test_closest_point_vertex_and_edge_regions():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    d2, w0, w1, w2 = _kernels.closest_point_on_triangle(
        tri[0], tri[1], tri[2], np.array([-1.0, -1.0, 0.0]))
    assert (w0, w1, w2) == pytest.approx((1.0, 0.0, 0.0), abs=1e-12)
    assert d2 == pytest.approx(2.0, abs=1e-12)
    d2, w0, w1, w2 = _kernels.closest_point_on_triangle(
        tri[0], tri[1], tri[2], np.array([0.5, -1.0, 0.0]))
    assert (w0, w1, w2) == pytest.approx((0.5, 0.5, 0.0), abs=1e-12)
    assert d2 == pytest.approx(1.0, abs=1e-12)


def test_accelerated_fit_equals_brute_force(rng):
    union = union_faces([_rand_mesh(rng, 60, 1), _rand_mesh(rng, 40, 2)])
    accel = FaceAccel(union, t=0)
    queries = rng.uniform(-2.5, 2.5, (500, 3))
    for q in queries:
        fast = fit_pixel(q, accel)
        slow = brute_force_fit(q, union, t=0)
        assert fast.residual == pytest.approx(slow.residual, abs=1e-9)
        if abs(fast.residual - slow.residual) == 0.0:
            # identical distances must resolve to the same lowest face
            assert fast.bc.face == slow.bc.face


def test_tie_breaks_to_lowest_face_index():
    # two coincident triangles: a query above them ties exactly
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                      [0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    mesh = AnimatedMesh(object_id=1, vertices=verts[None],
                        faces=np.array([[0, 1, 2], [3, 4, 5]]),
                        is_static=True)
    union = union_faces([mesh])
    q = np.array([0.2, 0.2, 1.0])
    assert brute_force_fit(q, union, 0).bc.face == 0
    assert fit_pixel(q, FaceAccel(union, 0)).bc.face == 0


def test_face_subset_restricts_search(rng):
    union = union_faces([_rand_mesh(rng, 30, 1), _rand_mesh(rng, 30, 2)])
    lo, hi = union.face_range(2)
    subset = np.arange(lo, hi)
    accel = FaceAccel(union, 0, face_ids=subset)
    q = rng.uniform(-2, 2, 3)
    fast = fit_pixel(q, accel)
    slow = brute_force_fit(q, union, 0, face_ids=subset)
    assert lo <= fast.bc.face < hi
    assert fast.residual == pytest.approx(slow.residual, abs=1e-12)


def test_on_surface_points_fit_with_zero_residual(rng):
    union = union_faces([_rand_mesh(rng, 50, 1)])
    accel = FaceAccel(union, 0)
    verts = union.vertices_all_times()[0]
    for _ in range(100):
        f = int(rng.integers(union.n_faces))
        w = rng.dirichlet(np.ones(3))
        p = w @ verts[union.faces[f]]
        res = fit_pixel(p, accel)
        assert res.residual < 1e-7
        q = res.bc.alpha @ verts[union.faces[res.bc.face]]
        assert np.allclose(q, p, atol=1e-7)


def test_rejects_empty_face_set(rng):
    union = union_faces([_rand_mesh(rng, 5, 1)])
    with pytest.raises(ValueError):
        FaceAccel(union, 0, face_ids=np.array([], dtype=np.int64))
    with pytest.raises(ValueError):
        brute_force_fit(np.zeros(3), union, 0,
                        face_ids=np.array([], dtype=np.int64))


def test_rejects_non_finite_query(rng):
    union = union_faces([_rand_mesh(rng, 5, 1)])
    with pytest.raises(ValueError):
        fit_pixel(np.array([np.nan, 0, 0]), FaceAccel(union, 0))
