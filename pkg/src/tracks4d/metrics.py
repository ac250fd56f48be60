"""Evaluation metrics for 4D reconstruction and tracking.

Covers similarity alignment, camera-pose errors (ATE, RPE), 3D track
metrics (APD, EPE), depth metrics (AbsRel, delta < 1.25 under scale or
scale-and-shift alignment), point-cloud reconstruction metrics (Acc, Comp,
NC), and the mutual-nearest-neighbor multiview correspondence error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Similarity", "umeyama_align", "apply_similarity", "ate", "rpe",
    "track_apd", "track_epe", "depth_metrics", "recon_metrics",
    "correspondence_error", "APD_THRESHOLDS",
]

# threshold ladder for APD, in scene units (TAPVid-3D style); configurable
APD_THRESHOLDS = (0.1, 0.2, 0.4, 0.8, 1.6)


@dataclass(frozen=True)
class Similarity:
    scale: float
    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)


def apply_similarity(sim: Similarity, points: np.ndarray) -> np.ndarray:
    return sim.scale * points @ sim.rotation.T + sim.translation


def umeyama_align(pred: np.ndarray, gt: np.ndarray,
                  with_scale: bool = True) -> Similarity:
    """Least-squares similarity (s, R, t) minimizing ||gt - (s R pred + t)||^2.

    Closed-form solution via the SVD of the cross-covariance, with the
    determinant sign fix for reflections. ``with_scale=False`` pins s = 1.
    Requires at least three non-degenerate correspondences.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise ValueError("point sets must match in shape")
    if len(pred) < 3:
        raise ValueError("need at least 3 correspondences")
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    xp = pred - mu_p
    xg = gt - mu_g
    cov = xg.T @ xp / len(pred)
    u, d, vt = np.linalg.svd(cov)
    if d[1] < 1e-12 * max(d[0], 1e-300):
        raise ValueError("degenerate (collinear or coincident) input")
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rot = u @ s @ vt
    if with_scale:
        var_p = (xp ** 2).sum() / len(pred)
        scale = float((d * np.diag(s)).sum() / var_p)
    else:
        scale = 1.0
    t = mu_g - scale * rot @ mu_p
    return Similarity(scale=scale, rotation=rot, translation=t)


# -- camera pose metrics ------------------------------------------------------


def ate(pred_positions: np.ndarray, gt_positions: np.ndarray,
        align: bool = True, with_scale: bool = True) -> float:
    """RMS of post-alignment translation residuals."""
    pred = np.asarray(pred_positions, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt_positions, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise ValueError("trajectory lengths differ")
    if align:
        sim = umeyama_align(pred, gt, with_scale=with_scale)
        pred = apply_similarity(sim, pred)
    return float(np.sqrt(np.mean(np.sum((pred - gt) ** 2, axis=1))))


def _relative_motions(rotations, positions):
    rels = []
    for k in range(len(positions) - 1):
        dr = rotations[k + 1] @ rotations[k].T
        dt = positions[k + 1] - positions[k]
        rels.append((dr, dt))
    return rels


def rpe(pred_rotations, pred_positions, gt_rotations, gt_positions
        ) -> tuple[float, float]:
    """(RPE-T, RPE-R) over consecutive-pose relative motions.

    RPE-T is the RMS norm of the relative-translation difference; RPE-R is
    the RMS geodesic angle, in degrees, between relative rotations.
    """
    if len(pred_positions) != len(gt_positions):
        raise ValueError("trajectory lengths differ")
    if len(pred_positions) < 2:
        raise ValueError("need at least two poses")
    pr = _relative_motions(pred_rotations, pred_positions)
    gr = _relative_motions(gt_rotations, gt_positions)
    terrs = []
    rerrs = []
    for (dr_p, dt_p), (dr_g, dt_g) in zip(pr, gr):
        terrs.append(np.sum((dt_p - dt_g) ** 2))
        m = dr_p @ dr_g.T
        cos = (np.trace(m) - 1.0) / 2.0
        rerrs.append(math.degrees(math.acos(min(1.0, max(-1.0, cos)))) ** 2)
    return float(np.sqrt(np.mean(terrs))), float(np.sqrt(np.mean(rerrs)))


# -- tracking metrics ---------------------------------------------------------


def track_epe(pred: np.ndarray, gt: np.ndarray,
              valid: np.ndarray | None = None) -> dict:
    """End-point error over valid points.

    Returns both aggregations (the per-point mean is the headline number):
    ``per_point`` averages over every valid (track, time) sample;
    ``per_track`` first averages within each track.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("track sets must match in shape")
    if valid is None:
        valid = np.ones(pred.shape[:2], dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise ValueError("no valid points")
    err = np.linalg.norm(pred - gt, axis=-1)
    per_point = float(err[valid].mean())
    track_means = []
    for m in range(err.shape[0]):
        if valid[m].any():
            track_means.append(err[m][valid[m]].mean())
    return {"per_point": per_point, "per_track": float(np.mean(track_means))}


def track_apd(pred: np.ndarray, gt: np.ndarray,
              valid: np.ndarray | None = None,
              thresholds=APD_THRESHOLDS) -> float:
    """Average percentage of valid points within each distance threshold.

    A point counts for threshold tau when its error is strictly below tau;
    the percentage is averaged over the threshold ladder.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("track sets must match in shape")
    if valid is None:
        valid = np.ones(pred.shape[:2], dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise ValueError("no valid points")
    err = np.linalg.norm(pred - gt, axis=-1)[valid]
    fracs = [(err < tau).mean() for tau in thresholds]
    return float(100.0 * np.mean(fracs))


# -- depth metrics ------------------------------------------------------------


def depth_metrics(pred: np.ndarray, gt: np.ndarray,
                  valid: np.ndarray | None = None,
                  align: str = "scale") -> dict:
    """(AbsRel, delta < 1.25) after per-sequence least-squares alignment.

    ``align`` is 'scale' (s*pred), 'scale-and-shift' (s*pred + c), or
    'none'. Ground truth must be positive on valid pixels.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.shape != gt.shape:
        raise ValueError("depth shapes differ")
    if valid is None:
        valid = np.ones(pred.shape, dtype=bool)
    valid = np.asarray(valid, dtype=bool).ravel()
    if not valid.any():
        raise ValueError("no valid pixels")
    p = pred[valid]
    g = gt[valid]
    if np.any(g <= 0):
        raise ValueError("ground-truth depth must be positive")
    if align == "scale":
        denom = float(p @ p)
        s = float(p @ g) / denom if denom > 0 else 1.0
        p = s * p
    elif align == "scale-and-shift":
        a = np.stack([p, np.ones_like(p)], axis=1)
        coef, *_ = np.linalg.lstsq(a, g, rcond=None)
        p = coef[0] * p + coef[1]
    elif align != "none":
        raise ValueError(f"unknown alignment {align!r}")
    absrel = float(np.mean(np.abs(p - g) / g))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, np.maximum(p / g, g / p), np.inf)
    delta = float(100.0 * np.mean(ratio < 1.25))
    return {"abs_rel": absrel, "delta_125": delta}


# -- reconstruction metrics ---------------------------------------------------


def estimate_normals(points: np.ndarray, k: int = 8) -> np.ndarray:
    """Per-point unit normals from a local plane fit over k neighbors."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    k = min(k, len(points))
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k)
    normals = np.empty_like(points)
    for i in range(len(points)):
        nb = points[idx[i]]
        nb = nb - nb.mean(axis=0)
        _, _, vt = np.linalg.svd(nb, full_matrices=False)
        normals[i] = vt[-1]
    return normals


def recon_metrics(pred: np.ndarray, gt: np.ndarray,
                  gt_normals: np.ndarray | None = None,
                  pred_normals: np.ndarray | None = None) -> dict:
    """(Acc, Comp, NC) between predicted and ground-truth point clouds.

    Acc is the mean pred-to-gt nearest distance, Comp the mean gt-to-pred
    nearest distance, and NC the mean absolute normal cosine over pred-to-gt
    matches. Normals are estimated by local plane fits when absent.
    Nearest-neighbor ties resolve to the lowest index (cKDTree convention).
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("point clouds must be non-empty")
    gt_tree = cKDTree(gt)
    pr_tree = cKDTree(pred)
    d_pg, idx_pg = gt_tree.query(pred)
    d_gp, _ = pr_tree.query(gt)
    if gt_normals is None:
        gt_normals = estimate_normals(gt)
    if pred_normals is None:
        pred_normals = estimate_normals(pred)
    gt_normals = np.asarray(gt_normals, dtype=np.float64)
    pred_normals = np.asarray(pred_normals, dtype=np.float64)
    cos = np.abs(np.sum(pred_normals * gt_normals[idx_pg], axis=1))
    return {"acc": float(d_pg.mean()), "comp": float(d_gp.mean()),
            "nc": float(cos.mean())}


# -- multiview correspondence error -------------------------------------------


def mutual_nearest_neighbors(source: np.ndarray, target: np.ndarray
                             ) -> np.ndarray:
    """(M, 2) pairs (target index u, source index v) that are mutual NNs.

    Matching uses the ground-truth clouds only; ties resolve to the lowest
    candidate index.
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(source) == 0 or len(target) == 0:
        return np.empty((0, 2), dtype=np.int64)
    s_tree = cKDTree(source)
    t_tree = cKDTree(target)
    _, nn_of_target = s_tree.query(target)   # u -> v
    _, nn_of_source = t_tree.query(source)   # v -> u
    us = np.arange(len(target))
    mutual = nn_of_source[nn_of_target] == us
    return np.stack([us[mutual], nn_of_target[mutual]], axis=1)


def correspondence_error(pred_target: list, gt_source: list, gt_target: list,
                         valid_source: list | None = None,
                         valid_target: list | None = None) -> dict:
    """Mutual-NN correspondence error between predicted and true target maps.

    Per frame, mutual nearest neighbors between the ground-truth source and
    target point maps select the co-visible target pixels; the error is the
    mean distance between predicted and true target points at those pixels,
    summed over frames and divided by the frame count. Frames with no
    mutual matches are excluded from the average and reported.
    """
    n_frames = len(gt_source)
    if not (len(gt_target) == len(pred_target) == n_frames):
        raise ValueError("frame counts differ")
    total = 0.0
    empty_frames = []
    used = 0
    for i in range(n_frames):
        src = np.asarray(gt_source[i], dtype=np.float64).reshape(-1, 3)
        tgt = np.asarray(gt_target[i], dtype=np.float64).reshape(-1, 3)
        prd = np.asarray(pred_target[i], dtype=np.float64).reshape(-1, 3)
        keep_t = np.ones(len(tgt), dtype=bool)
        keep_s = np.ones(len(src), dtype=bool)
        if valid_target is not None:
            keep_t = np.asarray(valid_target[i], dtype=bool).ravel()
        if valid_source is not None:
            keep_s = np.asarray(valid_source[i], dtype=bool).ravel()
        t_idx = np.where(keep_t)[0]
        s_idx = np.where(keep_s)[0]
        pairs = mutual_nearest_neighbors(src[s_idx], tgt[t_idx])
        if len(pairs) == 0:
            empty_frames.append(i)
            continue
        u = t_idx[pairs[:, 0]]
        err = np.linalg.norm(tgt[u] - prd[u], axis=1)
        total += err.mean()
        used += 1
    if used == 0:
        raise ValueError("no frame produced mutual correspondences")
    return {"l_cor": total / used, "frames_used": used,
            "empty_frames": empty_frames}
