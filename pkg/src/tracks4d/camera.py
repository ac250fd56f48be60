"""Pinhole camera model, point-map containers, and rigid frame changes.

Conventions (fixed throughout the toolkit and recorded in archive headers):

* world frame is right-handed with +z up;
* camera frame is right-handed with x right, y down, z forward (the camera
  looks down its +z axis);
* ``R`` maps world-frame directions to camera-frame directions and ``o`` is
  the camera center in world coordinates, so a world point ``q`` has camera
  coordinates ``R @ (q - o)`` and unprojection reads
  ``R.T @ (K^-1 @ d*(u+0.5, v+0.5, 1)) + o``;
* integer pixel ``(u, v)`` samples the surface at its center
  ``(u + 0.5, v + 0.5)``;
* depth maps store camera-frame z, not ray length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CameraParams",
    "FrameId",
    "PointMap",
    "DepthMap",
    "NoSurfaceError",
    "unproject",
    "unproject_map",
    "project",
    "change_reference",
    "world_to_cam",
    "cam_to_world",
]


class NoSurfaceError(ValueError):
    """A queried pixel carries no surface sample."""


def _check_rotation(R: np.ndarray, tol: float = 1e-6) -> None:
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R @ R.T, np.eye(3), atol=tol):
        raise ValueError("rotation is not orthonormal")
    if not math.isclose(float(np.linalg.det(R)), 1.0, abs_tol=tol):
        raise ValueError("rotation determinant is not +1")


@dataclass(frozen=True)
class CameraParams:
    """Intrinsics ``K``, world-to-camera rotation ``R``, camera center ``o``.

    ``hfov`` (degrees) is redundant with ``K`` and the image width; use
    :meth:`from_hfov` to construct consistently.
    """

    K: np.ndarray
    R: np.ndarray
    o: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        o = np.asarray(self.o, dtype=np.float64).reshape(3)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "o", o)
        _check_rotation(R)
        if K.shape != (3, 3):
            raise ValueError("K must be 3x3")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("focal entries must be positive")
        if abs(K[0, 1]) > 0 or K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0 or K[2, 2] != 1:
            raise ValueError("K must be upper-triangular with zero skew and K[2,2] = 1")

    @classmethod
    def from_hfov(cls, hfov_deg: float, width: int, height: int,
                  R: np.ndarray | None = None,
                  o: np.ndarray | None = None) -> "CameraParams":
        f = width / (2.0 * math.tan(math.radians(hfov_deg) / 2.0))
        K = np.array([[f, 0.0, width / 2.0],
                      [0.0, f, height / 2.0],
                      [0.0, 0.0, 1.0]])
        if R is None:
            R = np.eye(3)
        if o is None:
            o = np.zeros(3)
        return cls(K=K, R=R, o=o, width=width, height=height)

    @property
    def hfov(self) -> float:
        """Horizontal field of view in degrees, derived from K and width."""
        return math.degrees(2.0 * math.atan(self.width / (2.0 * self.K[0, 0])))

    @classmethod
    def look_at(cls, position, target, hfov_deg: float, width: int,
                height: int) -> "CameraParams":
        """Camera at ``position`` looking at ``target``, world +z as up."""
        position = np.asarray(position, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        fwd = target - position
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise ValueError("camera position coincides with look-at target")
        fwd = fwd / n
        up = np.array([0.0, 0.0, 1.0])
        if abs(fwd @ up) > 1.0 - 1e-9:
            up = np.array([0.0, 1.0, 0.0])  # looking straight up/down
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])
        return cls.from_hfov(hfov_deg, width, height, R=R, o=position)


@dataclass(frozen=True)
class FrameId:
    """(camera, time) pair with the fixed flat layout ``flat = t*C + c``."""

    camera: int
    time: int
    n_cameras: int
    n_times: int

    def __post_init__(self):
        if not 0 <= self.camera < self.n_cameras:
            raise IndexError(f"camera {self.camera} out of [0, {self.n_cameras})")
        if not 0 <= self.time < self.n_times:
            raise IndexError(f"time {self.time} out of [0, {self.n_times})")

    @property
    def flat(self) -> int:
        return self.time * self.n_cameras + self.camera

    @classmethod
    def from_flat(cls, flat: int, n_cameras: int, n_times: int) -> "FrameId":
        return cls(camera=flat % n_cameras, time=flat // n_cameras,
                   n_cameras=n_cameras, n_times=n_times)


@dataclass
class PointMap:
    """H x W grid of 3D points plus a validity mask."""

    points: np.ndarray  # (H, W, 3) float64
    valid: np.ndarray   # (H, W) bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.points.shape[:2] != self.valid.shape or self.points.shape[2] != 3:
            raise ValueError("points/valid shape mismatch")
        if not np.all(np.isfinite(self.points[self.valid])):
            raise ValueError("valid points must be finite")

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]


@dataclass
class DepthMap:
    """H x W grid of camera-frame z values plus a validity mask."""

    z: np.ndarray       # (H, W)
    valid: np.ndarray   # (H, W) bool

    def __post_init__(self):
        self.z = np.asarray(self.z)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.z.shape != self.valid.shape:
            raise ValueError("z/valid shape mismatch")
        if np.any(self.z[self.valid] <= 0):
            raise ValueError("valid depth must be positive")

    @property
    def height(self) -> int:
        return self.z.shape[0]

    @property
    def width(self) -> int:
        return self.z.shape[1]


def unproject(depth: DepthMap, cam: CameraParams, pixel: tuple[int, int]) -> np.ndarray:
    """World-frame 3D point sampled by ``pixel = (u, v)``.

    Raises :class:`NoSurfaceError` if the pixel is invalid in the depth map,
    IndexError if out of bounds.
    """
    u, v = pixel
    if not (0 <= u < depth.width and 0 <= v < depth.height):
        raise IndexError(f"pixel {(u, v)} out of {depth.width}x{depth.height}")
    if not depth.valid[v, u]:
        raise NoSurfaceError(f"pixel {(u, v)} has no surface sample")
    d = float(depth.z[v, u])
    return unproject_pixel(d, u, v, cam)


def unproject_pixel(d: float, u: int, v: int, cam: CameraParams) -> np.ndarray:
    """Unproject one depth sample; scalar op order matches the archive doc."""
    K = cam.K
    R = cam.R
    o = cam.o
    x = d * (u + 0.5)
    y = d * (v + 0.5)
    pc0 = (x - K[0, 2] * d) / K[0, 0]
    pc1 = (y - K[1, 2] * d) / K[1, 1]
    pc2 = d
    return np.array([
        R[0, 0] * pc0 + R[1, 0] * pc1 + R[2, 0] * pc2 + o[0],
        R[0, 1] * pc0 + R[1, 1] * pc1 + R[2, 1] * pc2 + o[1],
        R[0, 2] * pc0 + R[1, 2] * pc1 + R[2, 2] * pc2 + o[2],
    ])


def unproject_map(depth: DepthMap, cam: CameraParams) -> PointMap:
    """Unproject a whole depth map to a world-frame point map."""
    h, w = depth.z.shape
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    d = depth.z.astype(np.float64)
    x = d * (us + 0.5)
    y = d * (vs + 0.5)
    K, R, o = cam.K, cam.R, cam.o
    pc0 = (x - K[0, 2] * d) / K[0, 0]
    pc1 = (y - K[1, 2] * d) / K[1, 1]
    pc2 = d
    pts = np.empty((h, w, 3))
    for k in range(3):
        pts[..., k] = R[0, k] * pc0 + R[1, k] * pc1 + R[2, k] * pc2 + o[k]
    pts[~depth.valid] = 0.0
    return PointMap(points=pts, valid=depth.valid.copy())


def project(point: np.ndarray, cam: CameraParams) -> tuple[tuple[float, float], float]:
    """Project a world point to continuous pixel coordinates and depth z.

    The returned pixel is in the same centered convention as unproject: a
    point seen by integer pixel ``(u, v)`` projects to ``(u+0.5, v+0.5)``.
    Raises ValueError for points at or behind the camera plane.
    """
    point = np.asarray(point, dtype=np.float64)
    pc = cam.R @ (point - cam.o)
    if pc[2] <= 0:
        raise ValueError("point is behind the camera")
    uv = cam.K @ pc
    return (uv[0] / pc[2], uv[1] / pc[2]), float(pc[2])


def world_to_cam(points: np.ndarray, cam: CameraParams) -> np.ndarray:
    """Express world-frame points in ``cam``'s frame.

    Componentwise ``out[r] = d0*R[r,0] + d1*R[r,1] + d2*R[r,2]`` with
    ``d = p - o``: the scalar op order is part of the archive contract.
    """
    points = np.asarray(points, dtype=np.float64)
    R = cam.R
    d0 = points[..., 0] - cam.o[0]
    d1 = points[..., 1] - cam.o[1]
    d2 = points[..., 2] - cam.o[2]
    out = np.empty_like(points)
    for r in range(3):
        out[..., r] = R[r, 0] * d0 + R[r, 1] * d1 + R[r, 2] * d2
    return out


def cam_to_world(points: np.ndarray, cam: CameraParams) -> np.ndarray:
    """Express camera-frame points in the world frame.

    Componentwise ``out[k] = R[0,k]*p0 + R[1,k]*p1 + R[2,k]*p2 + o[k]``:
    the scalar op order is part of the archive contract.
    """
    points = np.asarray(points, dtype=np.float64)
    R = cam.R
    p0 = points[..., 0]
    p1 = points[..., 1]
    p2 = points[..., 2]
    out = np.empty_like(points)
    for k in range(3):
        out[..., k] = R[0, k] * p0 + R[1, k] * p1 + R[2, k] * p2 + cam.o[k]
    return out


def change_reference(pm: PointMap, src: CameraParams, dst: CameraParams) -> PointMap:
    """Re-express a point map from ``src``'s frame into ``dst``'s frame.

    Applies the rigid transform composed from the two extrinsics to every
    valid point; the validity mask is preserved unchanged.
    """
    world = cam_to_world(pm.points.reshape(-1, 3), src)
    out = world_to_cam(world, dst).reshape(pm.points.shape)
    out = np.where(pm.valid[..., None], out, 0.0)
    return PointMap(points=out, valid=pm.valid.copy())
