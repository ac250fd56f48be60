"""Procedural desk-scale scenes: composition, animation, clip generation.

Scene content is built from procedural primitives with scripted rigid and
non-rigid motion (a bobbing sphere, an articulated two-link arm, a waving
flag grid, and a swaying two-box figure standing in for a human), placed on
a ground-occupancy grid so footprints never overlap. Everything is
deterministic given the seed; all randomness flows through named
sub-streams so scene, cameras, and shake can be reproduced in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .archive import FrameData, write_archive
from .camera import CameraParams
from .fit import encode_frame, EncodeReport, SURFACE_TOL
from .mesh import AnimatedMesh, SceneUnion, union_faces
from .raster import flat_shade, rasterize
from .trajectory import CameraMotionSpec, make_rig, sample_trajectory

__all__ = ["SceneSpec", "Scene", "compose_scene", "generate_clip",
           "PlacementError"]

# seed-stream tags, combined with the user seed through SeedSequence
_STREAM_SCENE = 1
_STREAM_CAMERAS = 2


class PlacementError(RuntimeError):
    """Object layout failed after bounded retries."""


@dataclass(frozen=True)
class SceneSpec:
    """Declarative scene description (see docs/spec_files.md)."""

    n_dynamic: int = 2          # dynamic objects besides the figure, 1..3
    include_figure: bool = True
    n_times: int = 16
    extent: float = 6.0         # ground square side length, scene units
    grid_cells: int = 6         # occupancy grid resolution per side
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_dynamic <= 3:
            raise ValueError("n_dynamic must be in 1..3")
        if self.n_times < 1:
            raise ValueError("n_times must be positive")


@dataclass
class Scene:
    meshes: list[AnimatedMesh]
    root: np.ndarray
    n_times: int

    def union(self) -> SceneUnion:
        return union_faces(self.meshes, n_times=self.n_times)

    @property
    def dynamic_ids(self) -> list[int]:
        return [m.object_id for m in self.meshes if not m.is_static]


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


# -- primitive builders -----------------------------------------------------

def _ground_plane(object_id: int, extent: float, cells: int = 8) -> AnimatedMesh:
    xs = np.linspace(-extent / 2, extent / 2, cells + 1)
    gx, gy = np.meshgrid(xs, xs)
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    faces = []
    for i in range(cells):
        for j in range(cells):
            a = i * (cells + 1) + j
            b = a + 1
            c = a + cells + 1
            d = c + 1
            faces.append((a, b, c))
            faces.append((b, d, c))
    return AnimatedMesh(object_id=object_id, vertices=verts[None],
                        faces=np.array(faces), is_static=True)


def _uv_sphere(radius: float, rings: int = 7, segs: int = 12
               ) -> tuple[np.ndarray, np.ndarray]:
    verts = [(0.0, 0.0, radius)]
    for i in range(1, rings):
        th = math.pi * i / rings
        for j in range(segs):
            ph = 2 * math.pi * j / segs
            verts.append((radius * math.sin(th) * math.cos(ph),
                          radius * math.sin(th) * math.sin(ph),
                          radius * math.cos(th)))
    verts.append((0.0, 0.0, -radius))
    faces = []
    for j in range(segs):
        faces.append((0, 1 + j, 1 + (j + 1) % segs))
    for i in range(rings - 2):
        for j in range(segs):
            a = 1 + i * segs + j
            b = 1 + i * segs + (j + 1) % segs
            c = a + segs
            d = b + segs
            faces.append((a, c, b))
            faces.append((b, c, d))
    last = len(verts) - 1
    base = 1 + (rings - 2) * segs
    for j in range(segs):
        faces.append((last, base + (j + 1) % segs, base + j))
    return np.array(verts), np.array(faces)


def _box(size) -> tuple[np.ndarray, np.ndarray]:
    sx, sy, sz = size
    corners = np.array([(x, y, z) for x in (-sx / 2, sx / 2)
                        for y in (-sy / 2, sy / 2) for z in (-sz / 2, sz / 2)])
    faces = np.array([
        (0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5),
        (0, 4, 5), (0, 5, 1), (2, 3, 7), (2, 7, 6),
        (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3),
    ])
    return corners, faces


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _bouncing_sphere(object_id: int, center, T: int,
                     rng: np.random.Generator) -> AnimatedMesh:
    """Rigid sphere drifting in a small circle with a vertical bob."""
    radius = rng.uniform(0.22, 0.35)
    base, faces = _uv_sphere(radius)
    height = radius + rng.uniform(0.05, 0.25)
    orbit_r = rng.uniform(0.1, 0.25)
    phase = rng.uniform(0.0, 2 * math.pi)
    bob = rng.uniform(0.05, 0.2)
    vt = np.empty((T, len(base), 3))
    for t in range(T):
        frac = t / max(T - 1, 1)
        ang = phase + 2 * math.pi * frac
        off = np.array([center[0] + orbit_r * math.cos(ang),
                        center[1] + orbit_r * math.sin(ang),
                        height + bob * abs(math.sin(2 * math.pi * frac))])
        vt[t] = base + off
    return AnimatedMesh(object_id=object_id, vertices=vt, faces=faces)


def _two_link_arm(object_id: int, center, T: int,
                  rng: np.random.Generator) -> AnimatedMesh:
    """Two hinged boxes: the lower link yaws, the upper link pitches."""
    l1, l2 = rng.uniform(0.35, 0.5), rng.uniform(0.3, 0.45)
    w = 0.09
    b1, f1 = _box((w, w, l1))
    b2, f2 = _box((w, w, l2))
    amp1 = rng.uniform(0.4, 1.0)
    amp2 = rng.uniform(0.4, 1.2)
    phase = rng.uniform(0.0, 2 * math.pi)
    verts0 = np.concatenate([b1 + (0.0, 0.0, l1 / 2), b2 + (0.0, 0.0, l2 / 2)])
    faces = np.concatenate([f1, f2 + len(b1)])
    vt = np.empty((T, len(verts0), 3))
    for t in range(T):
        frac = t / max(T - 1, 1)
        yaw = amp1 * math.sin(2 * math.pi * frac + phase)
        pitch = amp2 * math.sin(2 * math.pi * frac)
        r1 = _rot_z(yaw)
        lower = (b1 + (0.0, 0.0, l1 / 2)) @ r1.T
        elbow = np.array([0.0, 0.0, l1]) @ r1.T
        r2 = r1 @ _rot_y(pitch)
        upper = (b2 + (0.0, 0.0, l2 / 2)) @ r2.T + elbow
        vt[t] = np.concatenate([lower, upper]) + np.asarray(
            [center[0], center[1], 0.0])
    return AnimatedMesh(object_id=object_id, vertices=vt, faces=faces)


def _waving_flag(object_id: int, center, T: int,
                 rng: np.random.Generator) -> AnimatedMesh:
    """Vertical grid with a traveling sinusoidal deformation (non-rigid)."""
    n = 8
    size = rng.uniform(0.5, 0.8)
    amp = rng.uniform(0.05, 0.12)
    speed = rng.uniform(1.0, 2.0)
    xs = np.linspace(0.0, size, n + 1)
    zs = np.linspace(0.2, 0.2 + size, n + 1)
    gx, gz = np.meshgrid(xs, zs)
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b = a + 1
            c = a + n + 1
            d = c + 1
            faces.append((a, b, c))
            faces.append((b, d, c))
    phase = rng.uniform(0.0, 2 * math.pi)
    vt = np.empty((T, gx.size, 3))
    for t in range(T):
        frac = t / max(T - 1, 1)
        wave = amp * np.sin(2 * math.pi * (gx / size - speed * frac) + phase) \
            * (gx / size)  # pinned at the pole edge
        vt[t] = np.stack([gx.ravel() + center[0] - size / 2,
                          wave.ravel() + center[1],
                          gz.ravel()], axis=1)
    return AnimatedMesh(object_id=object_id, vertices=vt, faces=np.array(faces))


def _figure(object_id: int, center, T: int,
            rng: np.random.Generator) -> AnimatedMesh:
    """Human proxy: torso and head boxes swaying about the ankles."""
    torso, tf = _box((0.3, 0.18, 0.8))
    head, hf = _box((0.16, 0.16, 0.18))
    verts0 = np.concatenate([torso + (0.0, 0.0, 0.5), head + (0.0, 0.0, 1.05)])
    faces = np.concatenate([tf, hf + len(torso)])
    amp = rng.uniform(0.1, 0.3)
    phase = rng.uniform(0.0, 2 * math.pi)
    vt = np.empty((T, len(verts0), 3))
    for t in range(T):
        frac = t / max(T - 1, 1)
        sway = amp * math.sin(2 * math.pi * frac + phase)
        r = _rot_y(sway) @ _rot_z(0.5 * sway)
        vt[t] = verts0 @ r.T + np.asarray([center[0], center[1], 0.0])
    return AnimatedMesh(object_id=object_id, vertices=vt, faces=faces)


_DYNAMIC_BUILDERS = (_bouncing_sphere, _two_link_arm, _waving_flag)
_FOOTPRINT_CELLS = 1  # half-width of an object's occupancy footprint


def compose_scene(spec: SceneSpec) -> Scene:
    """Place environment and animated objects on the occupancy grid."""
    rng = _rng(spec.seed, _STREAM_SCENE)
    meshes = [_ground_plane(1, spec.extent)]
    n_objects = spec.n_dynamic + (1 if spec.include_figure else 0)

    cells = spec.grid_cells
    occupancy = np.zeros((cells, cells), dtype=bool)
    # keep the border free so objects stay on the ground plane
    cell = spec.extent / cells

    def place() -> tuple[float, float]:
        for _ in range(200):
            i = int(rng.integers(1, cells - 1))
            j = int(rng.integers(1, cells - 1))
            i0, i1 = i - _FOOTPRINT_CELLS, i + _FOOTPRINT_CELLS + 1
            j0, j1 = j - _FOOTPRINT_CELLS, j + _FOOTPRINT_CELLS + 1
            if occupancy[max(i0, 0):i1, max(j0, 0):j1].any():
                continue
            occupancy[i, j] = True
            x = (j + 0.5) * cell - spec.extent / 2
            y = (i + 0.5) * cell - spec.extent / 2
            return x, y
        raise PlacementError(
            f"could not place {n_objects} objects on a {cells}x{cells} grid")

    next_id = 2
    for k in range(spec.n_dynamic):
        builder = _DYNAMIC_BUILDERS[int(rng.integers(len(_DYNAMIC_BUILDERS)))]
        meshes.append(builder(next_id, place(), spec.n_times, rng))
        next_id += 1
    if spec.include_figure:
        meshes.append(_figure(next_id, place(), spec.n_times, rng))

    return Scene(meshes=meshes, root=np.array([0.0, 0.0, 0.5]),
                 n_times=spec.n_times)


def generate_clip(scene_spec: SceneSpec, rig: str, out_path, *,
                  n_cameras: int = 8, width: int = 64, height: int = 64,
                  seed: int | None = None, rig_ranges: dict | None = None,
                  surface_tol: float = SURFACE_TOL, store_rgb: bool = False,
                  use_encoder: bool = True,
                  metadata: dict | None = None) -> list[EncodeReport]:
    """Full pipeline: compose, sample cameras, rasterize, encode, write.

    ``use_encoder=False`` stores the rasterizer's own exact barycentric maps
    instead of re-fitting from depth (useful as ground truth in tests).
    """
    if seed is None:
        seed = scene_spec.seed
    scene = compose_scene(scene_spec)
    union = scene.union()
    T = scene_spec.n_times

    specs = make_rig(rig, scene.root, seed, n_cameras=n_cameras,
                     ranges=rig_ranges)
    shots = [sample_trajectory(s, T, width, height) for s in specs]

    cameras: list[CameraParams] = []
    frames: list[FrameData] = []
    reports: list[EncodeReport] = []
    for t in range(T):
        for c in range(n_cameras):
            cam = shots[c][t]
            cameras.append(cam)
            res = rasterize(union, cam, t)
            if use_encoder:
                bary, report = encode_frame(res.depth, res.seg, cam, union, t,
                                            surface_tol=surface_tol)
                reports.append(report)
            else:
                bary = res.to_barymap()
            rgb = flat_shade(res, union, cam, t) if store_rgb else None
            frames.append(FrameData(depth=res.depth, seg=res.seg, bary=bary,
                                    rgb=rgb))

    meta = dict(metadata or {})
    meta["generator"] = {
        "seed": seed, "rig": rig, "n_cameras": n_cameras,
        "width": width, "height": height,
        "scene": {"n_dynamic": scene_spec.n_dynamic,
                  "include_figure": scene_spec.include_figure,
                  "n_times": T, "extent": scene_spec.extent,
                  "grid_cells": scene_spec.grid_cells,
                  "seed": scene_spec.seed},
        "surface_tol": surface_tol,
        "encoder": "fit" if use_encoder else "rasterizer",
        "camera_specs": [
            {"kind": s.kind, "radius": s.radius, "polar_deg": s.polar_deg,
             "azimuth_deg": s.azimuth_deg, "hfov_deg": s.hfov_deg,
             "keyframes": list(s.keyframes),
             "deltas": [list(d) for d in s.deltas],
             "shake_amplitude": s.shake_amplitude, "shake_seed": s.shake_seed,
             "track_velocity": list(s.track_velocity)}
            for s in specs
        ],
    }
    write_archive(out_path, height=height, width=width, n_times=T,
                  n_cameras=n_cameras, cameras=cameras, meshes=scene.meshes,
                  frames=frames, metadata=meta)
    return reports
