"""Per-pixel barycentric records: the compact dense-track encoding.

Each pixel stores 8 bytes: a 32-bit face index into the scene union and two
16-bit fixed-point weights (the third weight is reconstructed as
``1 - a1 - a2``). Two face-index sentinels encode pixel class:
``INVALID_FACE`` for no-surface pixels and ``STATIC_FACE`` for pixels on
static geometry, whose time-constant 3D point is recovered from the stored
depth map instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BaryMap", "INVALID_FACE", "STATIC_FACE", "ALPHA_SCALE"]

INVALID_FACE = np.uint32(0xFFFFFFFF)
STATIC_FACE = np.uint32(0xFFFFFFFE)
ALPHA_SCALE = 65535.0


def quantize_alpha(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantize (..., 3) simplex weights to two uint16 channels.

    ``q1 + q2`` is clamped to the scale so the reconstructed third weight is
    never negative; error per weight stays within 2^-15.
    """
    a = np.asarray(alpha, dtype=np.float64)
    q1 = np.rint(np.clip(a[..., 0], 0.0, 1.0) * ALPHA_SCALE)
    q2 = np.rint(np.clip(a[..., 1], 0.0, 1.0) * ALPHA_SCALE)
    q2 = np.minimum(q2, ALPHA_SCALE - q1)
    return q1.astype(np.uint16), q2.astype(np.uint16)


def dequantize_alpha(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Reconstruct (..., 3) float weights; division order is part of the
    archive contract."""
    a1 = q1.astype(np.float64) / ALPHA_SCALE
    a2 = q2.astype(np.float64) / ALPHA_SCALE
    a3 = 1.0 - a1 - a2
    return np.stack([a1, a2, a3], axis=-1)


@dataclass
class BaryMap:
    face: np.ndarray  # (H, W) uint32, sentinels above
    q1: np.ndarray    # (H, W) uint16
    q2: np.ndarray    # (H, W) uint16

    def __post_init__(self):
        self.face = np.ascontiguousarray(self.face, dtype=np.uint32)
        self.q1 = np.ascontiguousarray(self.q1, dtype=np.uint16)
        self.q2 = np.ascontiguousarray(self.q2, dtype=np.uint16)
        if not (self.face.shape == self.q1.shape == self.q2.shape):
            raise ValueError("channel shape mismatch")

    @property
    def height(self) -> int:
        return self.face.shape[0]

    @property
    def width(self) -> int:
        return self.face.shape[1]

    @property
    def dynamic(self) -> np.ndarray:
        return self.face < STATIC_FACE

    @property
    def static(self) -> np.ndarray:
        return self.face == STATIC_FACE

    @property
    def invalid(self) -> np.ndarray:
        return self.face == INVALID_FACE

    def alphas(self) -> np.ndarray:
        """(H, W, 3) dequantized weights (meaningful on dynamic pixels)."""
        return dequantize_alpha(self.q1, self.q2)

    @classmethod
    def from_float(cls, face: np.ndarray, alpha: np.ndarray) -> "BaryMap":
        """Quantize float weights; sentinel-faced pixels get zero weights."""
        q1, q2 = quantize_alpha(alpha)
        sentinel = face >= STATIC_FACE
        q1 = np.where(sentinel, np.uint16(0), q1)
        q2 = np.where(sentinel, np.uint16(0), q2)
        return cls(face=face, q1=q1, q2=q2)

    def to_bytes(self) -> bytes:
        """Row-major little-endian records: face u32, q1 u16, q2 u16."""
        rec = np.empty((self.height, self.width, 2), dtype="<u4")
        rec[..., 0] = self.face
        rec[..., 1] = self.q1.astype("<u4") | (self.q2.astype("<u4") << np.uint32(16))
        return rec.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes, height: int, width: int) -> "BaryMap":
        rec = np.frombuffer(raw, dtype="<u4").reshape(height, width, 2)
        face = rec[..., 0].copy()
        packed = rec[..., 1]
        q1 = (packed & np.uint32(0xFFFF)).astype(np.uint16)
        q2 = (packed >> np.uint32(16)).astype(np.uint16)
        return cls(face=face, q1=q1, q2=q2)
