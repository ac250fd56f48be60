"""Camera trajectory synthesis: spherical keyframing, shake, rig patterns.

Cameras are keyframed in spherical coordinates (radius r, polar angle theta
from +z, azimuth phi) about a root point and always look toward the root
(or, for tracking shots, toward a moving target). Gradient-noise shake is
applied to both the position and the look-at target, so orientation shakes
too. Horizontal fields of view stay within [39.6, 90] degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraParams
from .noise import GradientNoise1D

__all__ = ["CameraMotionSpec", "RIG_PATTERNS", "sample_trajectory",
           "perlin_shake", "make_rig", "spherical_to_cartesian",
           "HFOV_MIN", "HFOV_MAX"]

HFOV_MIN = 39.6
HFOV_MAX = 90.0

# default sampling ranges for randomized rigs; these are documented
# placeholders, not values taken from any reference configuration
DEFAULT_RANGES = {
    "radius": (2.5, 5.0),
    "polar_deg": (45.0, 80.0),
    "delta_radius": (0.5, 2.0),
    "delta_polar_deg": (10.0, 30.0),
    "delta_azimuth_deg": (180.0, 340.0),
    "shake_amplitude": (0.0, 0.03),
}

# noise lattice steps traversed over one full shot
_SHAKE_CYCLES = 6.0


def spherical_to_cartesian(r: float, theta_deg: float, phi_deg: float) -> np.ndarray:
    th = math.radians(theta_deg)
    ph = math.radians(phi_deg)
    return np.array([
        r * math.sin(th) * math.cos(ph),
        r * math.sin(th) * math.sin(ph),
        r * math.cos(th),
    ])


@dataclass(frozen=True)
class CameraMotionSpec:
    """One shot's motion: initial spherical pose plus per-keyframe deltas.

    ``keyframes`` are fractions of the shot in [0, 1], strictly increasing
    and starting at 0; ``deltas[k]`` is the cumulative (dr, dtheta_deg,
    dphi_deg) at ``keyframes[k]`` (deltas[0] must be zero). Interpolation
    between keyframes is linear in (r, theta, phi). ``kind`` is one of
    static, tracking, dolly, orbit; tracking shots keep the camera fixed and
    move the look-at target by ``track_velocity`` (units per shot).
    """

    kind: str
    root: tuple[float, float, float]
    radius: float
    polar_deg: float
    azimuth_deg: float
    hfov_deg: float
    keyframes: tuple[float, ...] = (0.0, 1.0)
    deltas: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.0),
                                                      (0.0, 0.0, 0.0))
    shake_amplitude: float = 0.0
    shake_seed: int = 0
    track_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("static", "tracking", "dolly", "orbit"):
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if not HFOV_MIN <= self.hfov_deg <= HFOV_MAX:
            raise ValueError(f"hfov {self.hfov_deg} outside [{HFOV_MIN}, {HFOV_MAX}]")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if len(self.keyframes) != len(self.deltas):
            raise ValueError("keyframes/deltas length mismatch")
        if any(b <= a for a, b in zip(self.keyframes, self.keyframes[1:])):
            raise ValueError("keyframe times must be strictly increasing")
        if self.keyframes[0] != 0.0 or self.deltas[0] != (0.0, 0.0, 0.0):
            raise ValueError("first keyframe must be t=0 with zero delta")
        if self.shake_amplitude < 0:
            raise ValueError("shake amplitude must be non-negative")


def _interp_spherical(spec: CameraMotionSpec, frac: float) -> tuple[float, float, float]:
    kf = spec.keyframes
    dl = spec.deltas
    if frac <= kf[0]:
        d = dl[0]
    elif frac >= kf[-1]:
        d = dl[-1]
    else:
        k = int(np.searchsorted(kf, frac, side="right")) - 1
        w = (frac - kf[k]) / (kf[k + 1] - kf[k])
        d = tuple((1.0 - w) * a + w * b for a, b in zip(dl[k], dl[k + 1]))
    return (spec.radius + d[0], spec.polar_deg + d[1], spec.azimuth_deg + d[2])


def base_poses(spec: CameraMotionSpec, n_frames: int
               ) -> tuple[np.ndarray, np.ndarray]:
    """Shake-free (positions, targets), each (T, 3)."""
    root = np.asarray(spec.root, dtype=np.float64)
    positions = np.empty((n_frames, 3))
    targets = np.empty((n_frames, 3))
    for t in range(n_frames):
        frac = t / (n_frames - 1) if n_frames > 1 else 0.0
        if spec.kind == "static":
            r, th, ph = spec.radius, spec.polar_deg, spec.azimuth_deg
        elif spec.kind == "tracking":
            r, th, ph = spec.radius, spec.polar_deg, spec.azimuth_deg
        else:  # dolly, orbit
            r, th, ph = _interp_spherical(spec, frac)
        positions[t] = root + spherical_to_cartesian(r, th, ph)
        if spec.kind == "tracking":
            targets[t] = root + frac * np.asarray(spec.track_velocity)
        else:
            targets[t] = root
    return positions, targets


def perlin_shake(positions: np.ndarray, targets: np.ndarray,
                 amplitude: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Add C1-smooth gradient-noise offsets to poses, per axis.

    Zero amplitude is the identity; the noise is zero at frame 0 by
    construction (lattice origin), so shots sharing a first pose keep it.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if amplitude == 0.0:
        return positions.copy(), targets.copy()
    n = len(positions)
    fracs = (np.arange(n) / (n - 1) if n > 1 else np.zeros(1)) * _SHAKE_CYCLES
    pos = positions.copy()
    tgt = targets.copy()
    for axis in range(3):
        pos[:, axis] += amplitude * GradientNoise1D(seed * 8 + axis)(fracs)
        tgt[:, axis] += amplitude * GradientNoise1D(seed * 8 + 4 + axis)(fracs)
    return pos, tgt


def sample_trajectory(spec: CameraMotionSpec, n_frames: int,
                      width: int, height: int) -> list[CameraParams]:
    """Full per-frame camera sequence for one shot; deterministic."""
    positions, targets = base_poses(spec, n_frames)
    positions, targets = perlin_shake(positions, targets,
                                      spec.shake_amplitude, spec.shake_seed)
    cams = []
    for t in range(n_frames):
        cams.append(CameraParams.look_at(positions[t], targets[t],
                                         spec.hfov_deg, width, height))
    return cams


RIG_PATTERNS = ("independent", "paired-orbits", "static-plus-orbits")


def _rand_orbit(rng: np.random.Generator, root, ranges: dict,
                kind: str = "orbit", azimuth: float | None = None,
                shake: float | None = None) -> CameraMotionSpec:
    r = rng.uniform(*ranges["radius"])
    th = rng.uniform(*ranges["polar_deg"])
    ph = rng.uniform(0.0, 360.0) if azimuth is None else azimuth
    hfov = rng.uniform(HFOV_MIN, HFOV_MAX)
    if shake is None:
        shake = rng.uniform(*ranges["shake_amplitude"])
    seed = int(rng.integers(0, 2**31 - 1))
    if kind == "static":
        return CameraMotionSpec(kind="static", root=tuple(root), radius=r,
                                polar_deg=th, azimuth_deg=ph, hfov_deg=hfov,
                                shake_amplitude=shake, shake_seed=seed)
    if kind == "tracking":
        vel = rng.uniform(-0.5, 0.5, 3)
        vel[2] = 0.0
        return CameraMotionSpec(kind="tracking", root=tuple(root), radius=r,
                                polar_deg=th, azimuth_deg=ph, hfov_deg=hfov,
                                shake_amplitude=shake, shake_seed=seed,
                                track_velocity=tuple(vel))
    dphi = rng.uniform(*ranges["delta_azimuth_deg"]) * rng.choice((-1.0, 1.0))
    dth = rng.uniform(*ranges["delta_polar_deg"]) * rng.choice((-1.0, 1.0))
    dr = rng.uniform(*ranges["delta_radius"]) * rng.choice((-1.0, 1.0))
    if r + min(0.0, dr) <= 0.2:  # keep the radius safely positive
        dr = abs(dr)
    if kind == "dolly":
        dth = 0.0
        dphi = 0.0
    return CameraMotionSpec(kind=kind, root=tuple(root), radius=r,
                            polar_deg=th, azimuth_deg=ph, hfov_deg=hfov,
                            deltas=((0.0, 0.0, 0.0), (dr, dth, dphi)),
                            shake_amplitude=shake, shake_seed=seed)


def make_rig(pattern: str, root, seed: int, n_cameras: int = 8,
             ranges: dict | None = None) -> list[CameraMotionSpec]:
    """Sample one multiview rig of ``n_cameras`` motion specs."""
    if pattern not in RIG_PATTERNS:
        raise ValueError(f"unknown rig pattern {pattern!r}; "
                         f"choose from {RIG_PATTERNS}")
    ranges = dict(DEFAULT_RANGES, **(ranges or {}))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 2])))
    specs: list[CameraMotionSpec] = []
    if pattern == "independent":
        # orbits dominate to maximize scene coverage
        kinds = ["orbit", "orbit", "orbit", "orbit", "orbit", "dolly",
                 "tracking", "static"]
        for c in range(n_cameras):
            specs.append(_rand_orbit(rng, root, ranges, kind=kinds[c % len(kinds)]))
    elif pattern == "paired-orbits":
        if n_cameras % 2:
            raise ValueError("paired-orbits needs an even camera count")
        for _ in range(n_cameras // 2):
            first = _rand_orbit(rng, root, ranges, kind="orbit")
            second = _rand_orbit(rng, root, ranges, kind="orbit")
            # the pair shares its first frame: same initial pose and optics
            second = CameraMotionSpec(
                kind="orbit", root=first.root, radius=first.radius,
                polar_deg=first.polar_deg, azimuth_deg=first.azimuth_deg,
                hfov_deg=first.hfov_deg, keyframes=second.keyframes,
                deltas=second.deltas, shake_amplitude=second.shake_amplitude,
                shake_seed=second.shake_seed)
            specs.extend([first, second])
    else:  # static-plus-orbits
        if n_cameras % 2:
            raise ValueError("static-plus-orbits needs an even camera count")
        half = n_cameras // 2
        base_phi = rng.uniform(0.0, 360.0)
        step = 360.0 / half
        statics = []
        for k in range(half):
            statics.append(_rand_orbit(rng, root, ranges, kind="static",
                                       azimuth=base_phi + k * step))
        orbits = []
        for s in statics:
            o = _rand_orbit(rng, root, ranges, kind="orbit")
            orbits.append(CameraMotionSpec(
                kind="orbit", root=s.root, radius=s.radius,
                polar_deg=s.polar_deg, azimuth_deg=s.azimuth_deg,
                hfov_deg=s.hfov_deg, keyframes=o.keyframes, deltas=o.deltas,
                shake_amplitude=o.shake_amplitude, shake_seed=o.shake_seed))
        specs = statics + orbits
    return specs
