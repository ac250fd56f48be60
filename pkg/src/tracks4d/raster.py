"""Software rasterizer producing depth, instance ids, and exact barycentrics.

This supplies the ground truth a game engine cannot emit directly: for each
covered pixel, the nearest face id and the exact barycentric coordinates of
the ray/triangle hit, alongside camera-frame depth and an instance
segmentation map (0 on static geometry and background sky).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .barymap import BaryMap, INVALID_FACE, STATIC_FACE
from .camera import CameraParams, DepthMap, world_to_cam
from .mesh import SceneUnion

__all__ = ["RasterResult", "rasterize"]


@dataclass
class RasterResult:
    depth: DepthMap
    seg: np.ndarray        # (H, W) int32 instance ids, 0 = static/background
    face: np.ndarray       # (H, W) int64 global face id, -1 = no surface
    alpha: np.ndarray      # (H, W, 3) exact barycentric weights

    def to_barymap(self) -> BaryMap:
        """Quantized per-pixel records matching the archive layout."""
        face = np.where(self.face < 0, INVALID_FACE,
                        np.where(self.seg == 0, STATIC_FACE,
                                 self.face.astype(np.int64))).astype(np.uint32)
        return BaryMap.from_float(face, self.alpha)


def rasterize(union: SceneUnion, cam: CameraParams, t: int) -> RasterResult:
    """Z-buffered rasterization of the scene union at time ``t``."""
    h, w = cam.height, cam.width
    depth = np.full((h, w), np.inf)
    face_idx = np.full((h, w), -1, dtype=np.int64)
    bary = np.zeros((h, w, 3))
    seg = np.zeros((h, w), dtype=np.int32)
    if union.n_faces:
        verts_cam = np.ascontiguousarray(world_to_cam(union.vertices_at(t), cam))
        _kernels.rasterize_frame(
            verts_cam, union.faces, union.face_object, union.face_is_static,
            cam.K[0, 0], cam.K[1, 1], cam.K[0, 2], cam.K[1, 2], h, w,
            depth, face_idx, bary, seg,
        )
    valid = np.isfinite(depth)
    depth = np.where(valid, depth, 0.0)
    return RasterResult(depth=DepthMap(z=depth, valid=valid),
                        seg=seg, face=face_idx, alpha=bary)


def flat_shade(result: RasterResult, union: SceneUnion, cam: CameraParams,
               t: int) -> np.ndarray:
    """Optional debug render: per-face Lambert shading against the view ray,
    tinted by instance id. Returns (H, W, 3) uint8."""
    h, w = result.depth.z.shape
    img = np.zeros((h, w, 3), dtype=np.uint8)
    hit = result.face >= 0
    if not hit.any():
        return img
    verts = world_to_cam(union.vertices_at(t), cam)
    tri = verts[union.faces[result.face[hit]]]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
    shade = np.abs(n[:, 2])  # view direction is approximately +z
    obj = result.seg[hit].astype(np.int64)
    rng_tint = np.stack([(obj * 97 + 41) % 193, (obj * 57 + 83) % 193,
                         (obj * 31 + 17) % 193], axis=1) + 62
    img[hit] = np.clip(rng_tint * (0.35 + 0.65 * shade[:, None]), 0, 255).astype(np.uint8)
    return img
