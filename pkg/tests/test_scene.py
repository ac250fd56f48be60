"""Procedural scenes and the end-to-end clip generator."""

import os
import subprocess
import sys

import numpy as np
import pytest

from tracks4d.archive import read_archive
from tracks4d.scene import (PlacementError, SceneSpec, compose_scene,
                            generate_clip)


def test_scene_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(n_dynamic=0, n_times=4)
    with pytest.raises(ValueError):
        SceneSpec(n_dynamic=4, n_times=4)
    with pytest.raises(ValueError):
        SceneSpec(n_dynamic=1, n_times=0)


def test_compose_scene_structure():
    scene = compose_scene(SceneSpec(n_dynamic=3, include_figure=True,
                                    n_times=6, seed=0))
    union = scene.union()
    ids = [m.object_id for m in union.meshes]
    assert ids == sorted(ids)
    assert union.meshes[0].is_static  # ground plane is object 1
    assert union.meshes[0].object_id == 1
    assert len(scene.dynamic_ids) == 4  # three props plus the figure
    assert union.n_times == 6


def test_compose_scene_is_seed_deterministic():
    a = compose_scene(SceneSpec(n_dynamic=2, n_times=4, seed=5))
    b = compose_scene(SceneSpec(n_dynamic=2, n_times=4, seed=5))
    for ma, mb in zip(a.union().meshes, b.union().meshes):
        assert np.array_equal(ma.vertices, mb.vertices)
        assert np.array_equal(ma.faces, mb.faces)
    c = compose_scene(SceneSpec(n_dynamic=2, n_times=4, seed=6))
    assert any(not np.array_equal(ma.vertices, mc.vertices)
               for ma, mc in zip(a.union().meshes, c.union().meshes))


def test_objects_do_not_interpenetrate_at_placement():
    scene = compose_scene(SceneSpec(n_dynamic=3, include_figure=True,
                                    n_times=4, seed=1))
    boxes = []
    for m in scene.union().meshes:
        if m.is_static:
            continue
        v = m.vertices[0]
        boxes.append((v[:, 0].min(), v[:, 0].max(),
                      v[:, 1].min(), v[:, 1].max()))
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            a, b = boxes[i], boxes[j]
            overlap = not (a[1] <= b[0] or b[1] <= a[0] or
                           a[3] <= b[2] or b[3] <= a[2])
            assert not overlap, (i, j)


def test_placement_error_when_scene_is_overcrowded():
    with pytest.raises(PlacementError):
        compose_scene(SceneSpec(n_dynamic=3, include_figure=True,
                                n_times=2, extent=1.2, grid_cells=3, seed=0))


def test_generated_clip_is_byte_identical_across_runs(tmp_path):
    spec = SceneSpec(n_dynamic=1, include_figure=False, n_times=4, seed=21)
    a = tmp_path / "a.t4d"
    b = tmp_path / "b.t4d"
    for p in (a, b):
        generate_clip(spec, "independent", p, n_cameras=2, width=24,
                      height=24, seed=21)
    assert a.read_bytes() == b.read_bytes()


def test_generated_clip_differs_across_seeds(tmp_path):
    a = tmp_path / "a.t4d"
    b = tmp_path / "b.t4d"
    generate_clip(SceneSpec(n_dynamic=1, include_figure=False, n_times=4,
                            seed=1), "independent", a, n_cameras=2,
                  width=24, height=24, seed=1)
    generate_clip(SceneSpec(n_dynamic=1, include_figure=False, n_times=4,
                            seed=2), "independent", b, n_cameras=2,
                  width=24, height=24, seed=2)
    assert a.read_bytes() != b.read_bytes()


def test_pure_python_backend_produces_identical_archives(tmp_path):
    """The jit kernels and their plain-Python fallback must agree bitwise."""
    spec = SceneSpec(n_dynamic=1, include_figure=False, n_times=4, seed=33)
    a = tmp_path / "jit.t4d"
    generate_clip(spec, "independent", a, n_cameras=2, width=24, height=24,
                  seed=33)
    b = tmp_path / "fallback.t4d"
    code = (
        "from tracks4d.scene import SceneSpec, generate_clip\n"
        "spec = SceneSpec(n_dynamic=1, include_figure=False, n_times=4,"
        " seed=33)\n"
        f"generate_clip(spec, 'independent', {str(b)!r}, n_cameras=2,"
        " width=24, height=24, seed=33)\n"
    )
    env = dict(os.environ, TRACKS4D_NUMBA="0")
    subprocess.run([sys.executable, "-c", code], check=True, env=env)
    assert a.read_bytes() == b.read_bytes()


def test_generated_clip_echoes_its_configuration(tmp_path):
    p = tmp_path / "meta.t4d"
    spec = SceneSpec(n_dynamic=1, include_figure=False, n_times=3, seed=2)
    generate_clip(spec, "static-plus-orbits", p, n_cameras=2, width=16,
                  height=16, seed=2, metadata={"note": "hello"})
    with read_archive(p) as a:
        gen = a.metadata["generator"]
        assert gen["seed"] == 2
        assert gen["rig"] == "static-plus-orbits"
        assert a.metadata["note"] == "hello"
        assert len(gen["camera_specs"]) == 2


def test_encoder_reports_are_within_tolerance(tiny_clip):
    _, reports = tiny_clip
    assert all(r.n_over_tolerance == 0 for r in reports)
    assert max(r.worst_residual for r in reports) < 1e-3


def test_rgb_stored_when_requested(tmp_path):
    p = tmp_path / "rgb.t4d"
    spec = SceneSpec(n_dynamic=1, include_figure=False, n_times=2, seed=4)
    generate_clip(spec, "independent", p, n_cameras=2, width=16, height=16,
                  seed=4, store_rgb=True)
    with read_archive(p) as a:
        img = a.read_rgb(0)
        assert img.shape == (16, 16, 3)
        assert img.any()
