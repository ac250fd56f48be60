"""Time-varying triangle meshes and barycentric track evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = ["AnimatedMesh", "BaryCoord", "SceneUnion", "union_faces",
           "eval_point", "eval_track"]

ALPHA_TOL = 1e-6


@dataclass
class AnimatedMesh:
    """Vertex trajectories and fixed faces for one scene object.

    ``vertices`` has shape (T, V, 3); static meshes store T = 1 and
    broadcast over time. Faces never change over time; topology changes are
    rejected at ingest by construction of this container.
    """

    object_id: int
    vertices: np.ndarray  # (T, V, 3) float64
    faces: np.ndarray     # (F, 3) int64
    is_static: bool = False

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 3 or self.vertices.shape[2] != 3:
            raise ValueError("vertices must have shape (T, V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must have shape (F, 3)")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("vertex positions must be finite")
        if self.faces.size and self.faces.max() >= self.vertices.shape[1]:
            raise ValueError("face index exceeds vertex count")
        if self.faces.size and self.faces.min() < 0:
            raise ValueError("negative face index")
        if self.is_static and self.vertices.shape[0] != 1:
            raise ValueError("static meshes must store a single timestep")
        v0 = self.vertices[0]
        if self.faces.size:
            e1 = v0[self.faces[:, 1]] - v0[self.faces[:, 0]]
            e2 = v0[self.faces[:, 2]] - v0[self.faces[:, 0]]
            areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
            if np.any(areas <= 1e-12):
                raise ValueError("degenerate face at t=0")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_times(self) -> int:
        return self.vertices.shape[0]

    def vertices_at(self, t: int) -> np.ndarray:
        return self.vertices[0] if self.is_static else self.vertices[t]


@dataclass(frozen=True)
class BaryCoord:
    """A face index into the scene union plus simplex weights."""

    face: int
    alpha: tuple[float, float, float]

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.shape != (3,):
            raise ValueError("alpha must be a triple")
        if np.any(a < -ALPHA_TOL) or abs(float(a.sum()) - 1.0) > ALPHA_TOL:
            raise ValueError(f"alpha {tuple(a)} outside the 3-simplex")
        object.__setattr__(self, "alpha", (float(a[0]), float(a[1]), float(a[2])))


class SceneUnion:
    """Global face table over all meshes of a clip.

    Meshes are concatenated in ascending ``object_id`` order, with each
    mesh's face indices offset by the vertex count of everything before it,
    so global face ids are stable across the clip's lifetime.
    """

    def __init__(self, meshes: list[AnimatedMesh], n_times: int | None = None):
        ids = [m.object_id for m in meshes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object_id in {sorted(ids)}")
        self.meshes = sorted(meshes, key=lambda m: m.object_id)
        times = {m.n_times for m in self.meshes if not m.is_static}
        if len(times) > 1:
            raise ValueError(f"inconsistent timestep counts {sorted(times)}")
        if n_times is None:
            n_times = times.pop() if times else 1
        elif times and times != {n_times}:
            raise ValueError(f"meshes store {times.pop()} timesteps, expected {n_times}")
        self.n_times = n_times

        vert_offsets = []
        face_offsets = []
        faces = []
        off = 0
        foff = 0
        for m in self.meshes:
            vert_offsets.append(off)
            face_offsets.append(foff)
            faces.append(m.faces + off)
            off += m.n_vertices
            foff += len(m.faces)
        self.n_vertices = off
        self.vert_offsets = vert_offsets
        self.face_offsets = face_offsets
        self.faces = (np.concatenate(faces) if faces
                      else np.empty((0, 3), dtype=np.int64))
        self.face_object = np.concatenate(
            [np.full(len(m.faces), m.object_id, dtype=np.int32) for m in self.meshes]
        ) if self.meshes else np.empty(0, dtype=np.int32)
        self.face_is_static = np.concatenate(
            [np.full(len(m.faces), m.is_static, dtype=np.uint8) for m in self.meshes]
        ) if self.meshes else np.empty(0, dtype=np.uint8)
        self._verts_time: np.ndarray | None = None

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def vertices_at(self, t: int) -> np.ndarray:
        """Concatenated vertex positions of every mesh at time ``t``."""
        if not 0 <= t < self.n_times:
            raise IndexError(f"time {t} out of [0, {self.n_times})")
        return np.concatenate([m.vertices_at(t) for m in self.meshes]) \
            if self.meshes else np.empty((0, 3))

    def vertices_all_times(self) -> np.ndarray:
        """(T, V_union, 3) vertex table; built once and cached."""
        if self._verts_time is None:
            self._verts_time = np.ascontiguousarray(
                np.stack([self.vertices_at(t) for t in range(self.n_times)])
            )
        return self._verts_time

    def global_face(self, object_id: int, local_face: int) -> int:
        for i, m in enumerate(self.meshes):
            if m.object_id == object_id:
                if not 0 <= local_face < len(m.faces):
                    raise IndexError("local face out of range")
                return self.face_offsets[i] + local_face
        raise KeyError(f"unknown object_id {object_id}")

    def local_face(self, global_face: int) -> tuple[int, int]:
        if not 0 <= global_face < self.n_faces:
            raise IndexError(f"face {global_face} out of range")
        obj = int(self.face_object[global_face])
        for i, m in enumerate(self.meshes):
            if m.object_id == obj:
                return obj, global_face - self.face_offsets[i]
        raise AssertionError("face table corrupt")

    def face_range(self, object_id: int) -> tuple[int, int]:
        """Global [start, stop) face id range of one object."""
        for i, m in enumerate(self.meshes):
            if m.object_id == object_id:
                return self.face_offsets[i], self.face_offsets[i] + len(m.faces)
        raise KeyError(f"unknown object_id {object_id}")

    def storage_scalars(self) -> int:
        """Scalar count of all vertex trajectories (3 * V * T per mesh)."""
        return sum(3 * m.n_vertices * m.n_times for m in self.meshes)


def union_faces(meshes: list[AnimatedMesh], n_times: int | None = None) -> SceneUnion:
    """Build the global face table; see :class:`SceneUnion`."""
    return SceneUnion(meshes, n_times=n_times)


def eval_point(union: SceneUnion, bc: BaryCoord, t: int) -> np.ndarray:
    """Convex combination of a face's vertex positions at time ``t``."""
    if not 0 <= bc.face < union.n_faces:
        raise IndexError(f"face {bc.face} out of [0, {union.n_faces})")
    if not 0 <= t < union.n_times:
        raise IndexError(f"time {t} out of [0, {union.n_times})")
    verts = union.vertices_all_times()[t]
    f = union.faces[bc.face]
    a = bc.alpha
    return a[0] * verts[f[0]] + a[1] * verts[f[1]] + a[2] * verts[f[2]]


def eval_track(union: SceneUnion, bc: BaryCoord) -> np.ndarray:
    """The (T, 3) trajectory traced by one barycentric record."""
    if not 0 <= bc.face < union.n_faces:
        raise IndexError(f"face {bc.face} out of [0, {union.n_faces})")
    out = np.empty((1, union.n_times, 3))
    _kernels.decode_tracks(
        union.vertices_all_times(), union.faces,
        np.array([bc.face], dtype=np.int64),
        np.array([bc.alpha], dtype=np.float64), out,
    )
    return out[0]
