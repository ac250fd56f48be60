"""Per-pixel barycentric fitting: the depth-to-surface encoder.

Given a depth map, camera, and the scene union mesh at the frame's own
time, each dynamic pixel's unprojected point is matched to the closest face
by a simplex-constrained point-to-triangle solve. A flat AABB hierarchy
accelerates the search; ``brute_force_fit`` is the exhaustive oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .barymap import BaryMap, INVALID_FACE, STATIC_FACE
from .camera import CameraParams, DepthMap, unproject_map
from .mesh import BaryCoord, SceneUnion

__all__ = ["FaceAccel", "FitResult", "EncodeReport", "fit_pixel",
           "brute_force_fit", "encode_frame", "SURFACE_TOL"]

SURFACE_TOL = 1e-3
_LEAF_SIZE = 4


@dataclass(frozen=True)
class FitResult:
    bc: BaryCoord
    residual: float


class FaceAccel:
    """Flat AABB tree over the union mesh's faces at one fixed time."""

    def __init__(self, union: SceneUnion, t: int,
                 face_ids: np.ndarray | None = None):
        verts = np.ascontiguousarray(union.vertices_all_times()[t])
        if face_ids is None:
            face_ids = np.arange(union.n_faces, dtype=np.int64)
        else:
            face_ids = np.asarray(face_ids, dtype=np.int64)
        if len(face_ids) == 0:
            raise ValueError("no faces to index")
        self.union = union
        self.t = t
        self.verts = verts
        self.face_ids = face_ids

        tri = verts[union.faces[face_ids]]  # (M, 3, 3)
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        centers = tri.mean(axis=1)

        node_min, node_max = [], []
        node_left, node_right = [], []
        node_start, node_count = [], []
        order = np.arange(len(face_ids))
        leaf_faces: list[np.ndarray] = []
        leaf_cursor = [0]

        def build(idx: np.ndarray) -> int:
            node = len(node_min)
            node_min.append(lo[idx].min(axis=0))
            node_max.append(hi[idx].max(axis=0))
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(-1)
            node_count.append(0)
            if len(idx) <= _LEAF_SIZE:
                node_start[node] = leaf_cursor[0]
                node_count[node] = len(idx)
                leaf_faces.append(np.sort(face_ids[idx]))
                leaf_cursor[0] += len(idx)
                return node
            c = centers[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            half = len(idx) // 2
            part = idx[np.argsort(c[:, axis], kind="stable")]
            left = build(part[:half])
            right = build(part[half:])
            node_left[node] = left
            node_right[node] = right
            return node

        build(order)
        self.node_min = np.ascontiguousarray(node_min, dtype=np.float64)
        self.node_max = np.ascontiguousarray(node_max, dtype=np.float64)
        self.node_left = np.asarray(node_left, dtype=np.int64)
        self.node_right = np.asarray(node_right, dtype=np.int64)
        self.node_start = np.asarray(node_start, dtype=np.int64)
        self.node_count = np.asarray(node_count, dtype=np.int64)
        self.leaf_faces = np.concatenate(leaf_faces)

    def fit(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closest-face search for (N, 3) points; returns (face, alpha, residual)."""
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        out_face = np.empty(n, dtype=np.int64)
        out_alpha = np.empty((n, 3))
        out_res = np.empty(n)
        _kernels.bvh_fit_points(
            points, self.verts, self.union.faces,
            self.node_min, self.node_max, self.node_left, self.node_right,
            self.node_start, self.node_count, self.leaf_faces,
            out_face, out_alpha, out_res,
        )
        return out_face, out_alpha, out_res


def fit_pixel(qbar: np.ndarray, accel: FaceAccel) -> FitResult:
    """Accelerated argmin over faces and simplex weights for one point."""
    qbar = np.asarray(qbar, dtype=np.float64)
    if not np.all(np.isfinite(qbar)):
        raise ValueError("query point must be finite")
    face, alpha, res = accel.fit(qbar.reshape(1, 3))
    return FitResult(bc=BaryCoord(face=int(face[0]), alpha=tuple(alpha[0])),
                     residual=float(res[0]))


def brute_force_fit(qbar: np.ndarray, union: SceneUnion, t: int,
                    face_ids: np.ndarray | None = None) -> FitResult:
    """Exhaustive scan over every face: the ground-truth oracle."""
    qbar = np.asarray(qbar, dtype=np.float64)
    if face_ids is None:
        face_ids = np.arange(union.n_faces, dtype=np.int64)
    else:
        face_ids = np.asarray(face_ids, dtype=np.int64)
    if len(face_ids) == 0:
        raise ValueError("no faces to search")
    verts = np.ascontiguousarray(union.vertices_all_times()[t])
    out_face = np.empty(1, dtype=np.int64)
    out_alpha = np.empty((1, 3))
    out_res = np.empty(1)
    _kernels.brute_force_fit_points(
        qbar.reshape(1, 3), verts, union.faces, face_ids,
        out_face, out_alpha, out_res,
    )
    return FitResult(bc=BaryCoord(face=int(out_face[0]), alpha=tuple(out_alpha[0])),
                     residual=float(out_res[0]))


@dataclass
class EncodeReport:
    """Per-frame encoder statistics for the CLI report."""

    n_dynamic: int = 0
    n_static: int = 0
    n_invalid: int = 0
    n_over_tolerance: int = 0
    worst_residual: float = 0.0
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))

    def histogram(self, bins: int = 8) -> list[tuple[float, float, int]]:
        if self.residuals.size == 0:
            return []
        counts, edges = np.histogram(self.residuals, bins=bins)
        return [(float(edges[i]), float(edges[i + 1]), int(counts[i]))
                for i in range(len(counts))]

    def summary(self) -> str:
        lines = [
            f"dynamic pixels : {self.n_dynamic}",
            f"static pixels  : {self.n_static}",
            f"invalid pixels : {self.n_invalid}",
            f"over tolerance : {self.n_over_tolerance}",
            f"worst residual : {self.worst_residual:.3e}",
        ]
        for lo, hi, n in self.histogram():
            lines.append(f"  [{lo:.2e}, {hi:.2e}) {n}")
        return "\n".join(lines)


def encode_frame(depth: DepthMap, seg: np.ndarray, cam: CameraParams,
                 union: SceneUnion, t: int,
                 surface_tol: float = SURFACE_TOL) -> tuple[BaryMap, EncodeReport]:
    """Fit every dynamic pixel of one frame to the scene union at time ``t``.

    Pixels with segmentation id 0 (or an all-zero seg map) are flagged
    static; invalid depth samples are flagged invalid. The search for each
    dynamic pixel is restricted to its instance's faces; pixels whose
    residual exceeds ``surface_tol`` are reclassified as static and counted
    in the report.
    """
    h, w = depth.z.shape
    seg = np.asarray(seg)
    if seg.shape != (h, w):
        raise ValueError("segmentation shape mismatch")

    face = np.full((h, w), STATIC_FACE, dtype=np.uint32)
    face[~depth.valid] = INVALID_FACE
    alpha = np.zeros((h, w, 3))
    report = EncodeReport()
    report.n_invalid = int((~depth.valid).sum())

    pm = unproject_map(depth, cam)
    dyn = depth.valid & (seg != 0)
    residuals = []
    for obj_id in np.unique(seg[dyn]):
        mask = dyn & (seg == obj_id)
        lo, hi = union.face_range(int(obj_id))
        if hi == lo:
            continue
        accel = FaceAccel(union, t, face_ids=np.arange(lo, hi, dtype=np.int64))
        pts = pm.points[mask]
        ff, aa, rr = accel.fit(pts)
        ok = rr <= surface_tol
        idx = np.where(mask)
        ok_rows = idx[0][ok]
        ok_cols = idx[1][ok]
        face[ok_rows, ok_cols] = ff[ok].astype(np.uint32)
        alpha[ok_rows, ok_cols] = aa[ok]
        report.n_over_tolerance += int((~ok).sum())
        if rr.size:
            report.worst_residual = max(report.worst_residual, float(rr.max()))
        residuals.append(rr)

    report.residuals = np.concatenate(residuals) if residuals else np.empty(0)
    bm = BaryMap.from_float(face, alpha)
    report.n_dynamic = int(bm.dynamic.sum())
    report.n_static = int(bm.static.sum())
    return bm, report
