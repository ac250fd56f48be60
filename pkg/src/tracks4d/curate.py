"""Data-curation heuristics: motion screening, occlusion filtering, and
camera-coverage statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import SceneUnion

__all__ = ["mask_iou", "motion_filter", "occlusion_filter", "coverage_stats",
           "birdseye_masks", "MotionReport", "OcclusionDecision",
           "OCCLUSION_AREA_THRESHOLD", "OCCLUSION_RATIO_THRESHOLD",
           "MOTION_IOU_THRESHOLD", "DEFORM_RATIO_RANGE"]

OCCLUSION_AREA_THRESHOLD = 10_000
OCCLUSION_RATIO_THRESHOLD = 0.3
MOTION_IOU_THRESHOLD = 0.5
DEFORM_RATIO_RANGE = (0.5, 2.0)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks.

    Two empty masks count as IoU 1.0: an object absent from both frames is
    no evidence of fast motion.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


@dataclass(frozen=True)
class MotionReport:
    keep: bool
    min_iou: float
    mean_iou: float
    reason: str


def motion_filter(masks, iou_threshold: float = MOTION_IOU_THRESHOLD,
                  deform_ratio_range: tuple[float, float] = DEFORM_RATIO_RANGE
                  ) -> MotionReport:
    """Screen one asset's per-frame masks for fast motion or wild deformation.

    Rejects when any adjacent-frame IoU drops below the threshold, or when
    the mask-area ratio between adjacent frames leaves
    ``deform_ratio_range`` (the deformation proxy; both areas nonzero).
    """
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if len(masks) < 2:
        raise ValueError("need at least two frames")
    ious = [mask_iou(masks[i], masks[i + 1]) for i in range(len(masks) - 1)]
    min_iou = min(ious)
    mean_iou = float(np.mean(ious))
    if min_iou < iou_threshold:
        return MotionReport(False, min_iou, mean_iou,
                            f"min adjacent IoU {min_iou:.3f} < {iou_threshold}")
    lo, hi = deform_ratio_range
    for i in range(len(masks) - 1):
        a0 = int(masks[i].sum())
        a1 = int(masks[i + 1].sum())
        if a0 and a1:
            ratio = a1 / a0
            if not lo <= ratio <= hi:
                return MotionReport(False, min_iou, mean_iou,
                                    f"area ratio {ratio:.2f} outside "
                                    f"[{lo}, {hi}] at frame {i}")
    return MotionReport(True, min_iou, mean_iou, "ok")


@dataclass(frozen=True)
class OcclusionDecision:
    keep: bool
    reason: str
    bbox_area: int
    visible_ratio: float


def occlusion_filter(visibility: np.ndarray | None,
                     area_threshold: int = OCCLUSION_AREA_THRESHOLD,
                     ratio_threshold: float = OCCLUSION_RATIO_THRESHOLD
                     ) -> OcclusionDecision:
    """Frame keep/reject decision from one instance's visibility mask.

    Rejects when (i) the mask is missing, (ii) the mask's bounding-box area
    is below ``area_threshold`` pixels, or (iii) the visible-pixel to
    bounding-box-area ratio is below ``ratio_threshold``.
    """
    if visibility is None:
        return OcclusionDecision(False, "missing mask", 0, 0.0)
    visibility = np.asarray(visibility, dtype=bool)
    rows = np.any(visibility, axis=1)
    cols = np.any(visibility, axis=0)
    if not rows.any():
        return OcclusionDecision(False, "empty mask", 0, 0.0)
    r0, r1 = np.where(rows)[0][[0, -1]]
    c0, c1 = np.where(cols)[0][[0, -1]]
    bbox_area = int((r1 - r0 + 1) * (c1 - c0 + 1))
    if bbox_area < area_threshold:
        return OcclusionDecision(False,
                                 f"bbox area {bbox_area} < {area_threshold}",
                                 bbox_area, 0.0)
    ratio = float(visibility.sum() / bbox_area)
    if ratio < ratio_threshold:
        return OcclusionDecision(False,
                                 f"visible ratio {ratio:.3f} < {ratio_threshold}",
                                 bbox_area, ratio)
    return OcclusionDecision(True, "ok", bbox_area, ratio)


def coverage_stats(positions: np.ndarray, root) -> tuple[float, float, float]:
    """(azimuth span deg, polar span deg, radial span) of camera positions.

    Spans are of the spherical coordinates of the positions about ``root``.
    The azimuth span is the arc swept along the trajectory order: angles are
    unwrapped between consecutive poses (so crossing 0 does not inflate the
    span, and a full revolution reports 360), then capped at 360.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    root = np.asarray(root, dtype=np.float64)
    rel = positions - root
    r = np.linalg.norm(rel, axis=1)
    if np.any(r < 1e-12):
        raise ValueError("a camera position coincides with the root")
    polar = np.degrees(np.arccos(np.clip(rel[:, 2] / r, -1.0, 1.0)))
    azim = np.degrees(np.unwrap(np.arctan2(rel[:, 1], rel[:, 0])))
    az_span = min(360.0, float(azim.max() - azim.min()))
    return (az_span, float(polar.max() - polar.min()), float(r.max() - r.min()))


def birdseye_masks(union: SceneUnion, resolution: int = 128,
                   extent: float | None = None) -> dict[int, np.ndarray]:
    """Orthographic top-down coverage masks of each dynamic object.

    Returns object_id -> (T, res, res) boolean arrays. Triangles are
    projected by dropping z; used by the motion filter.
    """
    if extent is None:
        lo = min(m.vertices[..., :2].min() for m in union.meshes)
        hi = max(m.vertices[..., :2].max() for m in union.meshes)
        extent = 2.0 * max(abs(lo), abs(hi)) + 1e-6
    scale = resolution / extent
    out: dict[int, np.ndarray] = {}
    for m in union.meshes:
        if m.is_static:
            continue
        masks = np.zeros((union.n_times, resolution, resolution), dtype=bool)
        for t in range(union.n_times):
            verts = m.vertices_at(t)
            pts = (verts[:, :2] + extent / 2) * scale
            for f in m.faces:
                tri = pts[f]
                _fill_triangle(masks[t], tri)
        out[m.object_id] = masks
    return out


def _fill_triangle(mask: np.ndarray, tri: np.ndarray) -> None:
    res = mask.shape[0]
    x0 = max(int(math.floor(tri[:, 0].min())), 0)
    x1 = min(int(math.ceil(tri[:, 0].max())), res - 1)
    y0 = max(int(math.floor(tri[:, 1].min())), 0)
    y1 = min(int(math.ceil(tri[:, 1].max())), res - 1)
    if x0 > x1 or y0 > y1:
        return
    xs, ys = np.meshgrid(np.arange(x0, x1 + 1) + 0.5,
                         np.arange(y0, y1 + 1) + 0.5)
    d = np.stack([xs - tri[0, 0], ys - tri[0, 1]], axis=-1)
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    if abs(det) < 1e-12:
        return
    w1 = (d[..., 0] * e2[1] - d[..., 1] * e2[0]) / det
    w2 = (d[..., 1] * e1[0] - d[..., 0] * e1[1]) / det
    inside = (w1 >= 0) & (w2 >= 0) & (w1 + w2 <= 1)
    mask[y0:y1 + 1, x0:x1 + 1] |= inside
