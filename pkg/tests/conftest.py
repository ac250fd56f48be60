"""Shared fixtures: small generated clips, reused across the whole session."""

import numpy as np
import pytest

from tracks4d.scene import SceneSpec, generate_clip


@pytest.fixture(scope="session")
def tiny_clip(tmp_path_factory):
    """32x32, T=8, C=2 clip with one dynamic object (fast oracle target)."""
    path = tmp_path_factory.mktemp("clips") / "tiny.t4d"
    spec = SceneSpec(n_dynamic=1, include_figure=False, n_times=8, seed=11)
    reports = generate_clip(spec, "independent", path, n_cameras=2,
                            width=32, height=32, seed=11)
    return path, reports


@pytest.fixture(scope="session")
def paired_clip(tmp_path_factory):
    """Paired-orbit rig whose camera pairs share their first frame."""
    path = tmp_path_factory.mktemp("clips") / "paired.t4d"
    spec = SceneSpec(n_dynamic=2, include_figure=True, n_times=6, seed=3)
    reports = generate_clip(spec, "paired-orbits", path, n_cameras=4,
                            width=48, height=48, seed=3)
    return path, reports


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
