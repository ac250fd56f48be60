"""Software rasterizer: depth, segmentation, and exact hit barycentrics."""

import numpy as np
import pytest

from tracks4d.barymap import INVALID_FACE, STATIC_FACE
from tracks4d.camera import CameraParams, DepthMap, unproject_map
from tracks4d.mesh import AnimatedMesh, union_faces
from tracks4d.raster import rasterize


def _quad(object_id, z, half=1.0, is_static=True):
    """Axis-aligned square at world height z, split into two triangles."""
    v = np.array([[-half, -half, z], [half, -half, z],
                  [half, half, z], [-half, half, z]])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return AnimatedMesh(object_id=object_id, vertices=v[None], faces=f,
                        is_static=is_static)


def _overhead_cam(height_above=5.0, w=24, h=24):
    return CameraParams.look_at(np.array([0.01, 0.02, height_above]),
                                np.zeros(3), 60.0, w, h)


def test_depth_equals_camera_distance_along_ray():
    cam = _overhead_cam()
    union = union_faces([_quad(1, z=0.0, half=6.0)])
    res = rasterize(union, cam, t=0)
    assert res.depth.valid.all()
    # unprojecting the rasterized depth must land back on the z=0 plane
    pm = unproject_map(res.depth, cam)
    assert np.max(np.abs(pm.points[..., 2])) < 1e-9


def test_strict_z_test_keeps_nearest_surface():
    cam = _overhead_cam()
    near = _quad(2, z=1.0, half=0.5, is_static=False)
    far = _quad(1, z=0.0, half=6.0)
    union = union_faces([far, near])
    res = rasterize(union, cam, t=0)
    c = res.seg[12, 12]
    assert c == 2  # the nearer quad wins the center pixel
    assert res.seg[1, 1] == 0  # corners only see the static ground
    assert res.depth.z[12, 12] < res.depth.z[1, 1]


def test_background_pixels_are_invalid():
    cam = CameraParams.look_at(np.array([0, -6.0, 2.0]), np.zeros(3),
                               50.0, 32, 24)
    union = union_faces([_quad(1, z=0.0, half=1.0)])
    res = rasterize(union, cam, t=0)
    assert not res.depth.valid.all()
    bm = res.to_barymap()
    assert np.array_equal(bm.invalid, ~res.depth.valid)


def test_barymap_sentinels_follow_segmentation():
    cam = _overhead_cam()
    union = union_faces([_quad(1, z=0.0, half=3.0),
                         _quad(2, z=1.0, half=0.5, is_static=False)])
    res = rasterize(union, cam, t=0)
    bm = res.to_barymap()
    assert np.all(bm.face[res.seg == 0] >= STATIC_FACE)
    dynamic = (res.seg == 2)
    assert dynamic.any()
    assert np.all(bm.face[dynamic] < STATIC_FACE)
    assert not np.any(bm.face[dynamic] == INVALID_FACE)


def test_hit_barycentrics_reconstruct_hit_point_exactly():
    cam = _overhead_cam()
    union = union_faces([_quad(1, z=0.0, half=3.0),
                         _quad(2, z=1.0, half=0.8, is_static=False)])
    res = rasterize(union, cam, t=0)
    verts = union.vertices_all_times()[0]
    pm = unproject_map(res.depth, cam)
    hit = res.face >= 0
    assert hit.any()
    for v, u in zip(*np.nonzero(hit)):
        f = res.face[v, u]
        w = res.alpha[v, u]
        p = w @ verts[union.faces[f]]
        assert np.allclose(p, pm.points[v, u], atol=1e-9), (u, v)


def test_rasterize_is_deterministic():
    cam = _overhead_cam()
    union = union_faces([_quad(1, z=0.0, half=3.0),
                         _quad(2, z=0.5, half=0.7, is_static=False)])
    a = rasterize(union, cam, t=0)
    b = rasterize(union, cam, t=0)
    assert np.array_equal(a.depth.z, b.depth.z)
    assert np.array_equal(a.seg, b.seg)
    assert np.array_equal(a.face, b.face)
    assert np.array_equal(a.alpha, b.alpha)


def test_surface_behind_camera_is_discarded():
    # camera above the plane looking away: nothing visible
    cam = CameraParams.look_at(np.array([0, 0, 2.0]), np.array([0, 5.0, 9.0]),
                               60.0, 16, 16)
    union = union_faces([_quad(1, z=0.0, half=3.0)])
    res = rasterize(union, cam, t=0)
    assert not res.depth.valid.any()
