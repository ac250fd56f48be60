"""Seeded 1D gradient noise for smooth camera shake."""

from __future__ import annotations

import numpy as np

__all__ = ["GradientNoise1D", "NOISE_MAX_BOUND"]

# |gradient| <= 1 and the fade blend stays between the two corner values,
# so |noise(x)| <= 1 everywhere.
NOISE_MAX_BOUND = 1.0

_TABLE_SIZE = 256


def _fade(t: np.ndarray) -> np.ndarray:
    # quintic fade: C2-continuous, zero first derivative at the lattice
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


class GradientNoise1D:
    """Classic gradient noise on the integer lattice, zero at lattice points.

    Deterministic for a given seed; gradients are drawn once from a PCG64
    stream and wrapped modulo the table size.
    """

    def __init__(self, seed: int):
        rng = np.random.Generator(np.random.PCG64(seed))
        grads = rng.uniform(-1.0, 1.0, _TABLE_SIZE)
        # avoid near-zero gradients that would flatten whole cells
        grads = np.where(np.abs(grads) < 0.05, np.sign(grads + 1e-12) * 0.05, grads)
        self._grads = grads

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        i0 = np.floor(x).astype(np.int64)
        f = x - i0
        g0 = self._grads[i0 % _TABLE_SIZE]
        g1 = self._grads[(i0 + 1) % _TABLE_SIZE]
        u0 = g0 * f
        u1 = g1 * (f - 1.0)
        t = _fade(f)
        return u0 + t * (u1 - u0)
