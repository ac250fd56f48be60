"""Animated meshes, the scene union table, and barycentric evaluation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracks4d.mesh import (AnimatedMesh, BaryCoord, eval_point, eval_track,
                           union_faces)


def _tri_mesh(object_id, offset=0.0, n_times=1, is_static=True):
    verts = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], float) + offset
    if n_times > 1:
        verts = np.concatenate(
            [verts + [0, 0, 0.1 * t] for t in range(n_times)])
    return AnimatedMesh(object_id=object_id, vertices=verts,
                        faces=np.array([[0, 1, 2]]), is_static=is_static)


def test_rejects_degenerate_first_frame():
    verts = np.zeros((1, 3, 3))
    with pytest.raises(ValueError):
        AnimatedMesh(object_id=1, vertices=verts,
                     faces=np.array([[0, 1, 2]]), is_static=True)


def test_static_mesh_must_have_one_timestep():
    verts = np.repeat(_tri_mesh(1).vertices, 2, axis=0)
    with pytest.raises(ValueError):
        AnimatedMesh(object_id=1, vertices=verts,
                     faces=np.array([[0, 1, 2]]), is_static=True)


def test_union_orders_by_object_id_and_offsets_faces():
    a = _tri_mesh(5, offset=10.0)
    b = _tri_mesh(2)
    u = union_faces([a, b])
    assert [m.object_id for m in u.meshes] == [2, 5]
    assert u.n_faces == 2
    # second mesh's face indices are shifted by the first mesh's vertex count
    assert list(u.faces[1]) == [3, 4, 5]
    assert u.global_face(5, 0) == 1
    assert u.local_face(1) == (5, 0)
    assert u.face_range(2) == (0, 1)


def test_union_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        union_faces([_tri_mesh(1), _tri_mesh(1, offset=3.0)])


def test_union_broadcasts_static_meshes_over_time():
    static = _tri_mesh(1)
    moving = _tri_mesh(2, offset=5.0, n_times=4, is_static=False)
    u = union_faces([static, moving])
    assert u.n_times == 4
    all_t = u.vertices_all_times()
    assert all_t.shape == (4, 6, 3)
    for t in range(4):
        assert np.array_equal(all_t[t, :3], static.vertices[0])
        assert np.array_equal(all_t[t, 3:], moving.vertices[t])


def test_union_all_static_takes_explicit_time_count():
    u = union_faces([_tri_mesh(1)], n_times=5)
    assert u.n_times == 5
    assert u.vertices_all_times().shape[0] == 5


def test_storage_scalars_counts_stored_vertex_times():
    moving = _tri_mesh(2, n_times=4, is_static=False)
    u = union_faces([_tri_mesh(1), moving])
    # static meshes store a single timestep; dynamic ones store all of them
    assert u.storage_scalars() == 3 * 3 * 1 + 3 * 3 * 4


def test_eval_point_matches_manual_weighted_sum():
    moving = _tri_mesh(2, n_times=3, is_static=False)
    u = union_faces([moving])
    bc = BaryCoord(face=0, alpha=(0.2, 0.3, 0.5))
    for t in range(3):
        v = moving.vertices[t]
        expect = 0.2 * v[0] + 0.3 * v[1] + 0.5 * v[2]
        assert np.allclose(eval_point(u, bc, t), expect, atol=1e-15)


def test_eval_track_equals_per_time_eval_point():
    moving = _tri_mesh(2, n_times=5, is_static=False)
    u = union_faces([_tri_mesh(1), moving])
    bc = BaryCoord(face=1, alpha=(0.1, 0.6, 0.3))
    track = eval_track(u, bc)
    assert track.shape == (5, 3)
    for t in range(5):
        assert np.allclose(track[t], eval_point(u, bc, t), atol=1e-15)


def test_bary_coord_validates_simplex():
    with pytest.raises(ValueError):
        BaryCoord(face=0, alpha=(0.5, 0.6, 0.2))
    with pytest.raises(ValueError):
        BaryCoord(face=0, alpha=(-0.2, 0.6, 0.6))


@settings(max_examples=40, deadline=None)
@given(a1=st.floats(0.0, 1.0), frac=st.floats(0.0, 1.0))
def test_eval_point_is_affine_in_weights(a1, frac):
    a2 = (1.0 - a1) * frac
    a3 = 1.0 - a1 - a2
    moving = _tri_mesh(2, n_times=2, is_static=False)
    u = union_faces([moving])
    bc = BaryCoord(face=0, alpha=(a1, a2, a3))
    p = eval_point(u, bc, 1)
    v = moving.vertices[1]
    assert np.allclose(p, a1 * v[0] + a2 * v[1] + a3 * v[2], atol=1e-12)
