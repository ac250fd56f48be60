"""Clip archive: on-disk container and query engine for dense 4D tracks.

Binary layout (full field-by-field description in docs/archive_format.md):
a magic + version preamble, then tagged sections, each framed as
``tag(4) | u64 payload length | payload | u32 crc32(payload)``, all
little-endian. Header sections (HEAD, META, CAMS, MESH*) come first, then
per-frame payloads in flat frame order (time-major: ``flat = t*C + c``),
then an INDX section of frame offsets and a 12-byte footer locating INDX,
so single frames stream without loading the whole file.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .barymap import BaryMap, INVALID_FACE, STATIC_FACE
from .camera import (CameraParams, DepthMap, FrameId, NoSurfaceError,
                     PointMap, unproject, unproject_map, world_to_cam)
from .mesh import AnimatedMesh, SceneUnion

__all__ = [
    "ClipArchive", "FrameData", "write_archive", "read_archive",
    "storage_estimate", "ArchiveError", "VersionError", "ChecksumError",
    "TruncatedError",
]

MAGIC = b"T4DCLIP\0"
FOOTER_MAGIC = b"T4DE"
VERSION = 1
_ZLEVEL = 6

CONVENTIONS = (
    "right-handed world, +z up; camera x right, y down, z forward; "
    "R maps world to camera axes, o is the camera center in world units; "
    "pixel (u,v) samples its center (u+0.5, v+0.5); depth is camera-frame z; "
    "frames ordered time-major (flat = t*C + c)"
)


class ArchiveError(Exception):
    """Malformed or unreadable clip archive."""


class VersionError(ArchiveError):
    """Unknown magic or unsupported format version."""


class ChecksumError(ArchiveError):
    """A section payload failed its CRC check."""


class TruncatedError(ArchiveError):
    """The file ends before a complete section or footer."""


def storage_estimate(height: int, width: int, n_times: int, n_cameras: int,
                     n_vertices: int = 0, mode: str = "compact") -> dict:
    """Closed-form storage accounting at 4 bytes per scalar.

    ``dense`` materializes every per-frame point map at every time in a
    single reference frame: 3*4*H*W*T * (T*C) bytes. ``compact`` stores four
    scalars per pixel plus the 3*V*T vertex-trajectory scalars:
    16*H*W*T*C + 12*V*T bytes. ``rgb`` is the raw-frame baseline
    3*4*H*W*T*C. Returns the byte count and its components.
    """
    if min(height, width, n_times, n_cameras) <= 0:
        raise ValueError("dimensions must be positive")
    n = n_times * n_cameras
    if mode == "dense":
        total = 3 * 4 * height * width * n_times * n
        return {"mode": mode, "bytes": total}
    if mode == "rgb":
        total = 3 * 4 * height * width * n
        return {"mode": mode, "bytes": total}
    if mode == "compact":
        pixel_records = 16 * height * width * n
        vertex_tracks = 12 * n_vertices * n_times
        return {"mode": mode, "bytes": pixel_records + vertex_tracks,
                "pixel_record_bytes": pixel_records,
                "vertex_track_bytes": vertex_tracks}
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class FrameData:
    """One frame's payloads, as produced by the rasterizer + encoder."""

    depth: DepthMap
    seg: np.ndarray
    bary: BaryMap
    rgb: np.ndarray | None = None


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload + \
        struct.pack("<I", zlib.crc32(payload))


def _pack_camera(cam: CameraParams) -> bytes:
    vals = [cam.K[0, 0], cam.K[1, 1], cam.K[0, 2], cam.K[1, 2]]
    vals += list(cam.R.reshape(-1))
    vals += list(cam.o)
    return struct.pack("<16d", *vals)


def _unpack_camera(raw: bytes, width: int, height: int) -> CameraParams:
    vals = struct.unpack("<16d", raw)
    K = np.array([[vals[0], 0.0, vals[2]],
                  [0.0, vals[1], vals[3]],
                  [0.0, 0.0, 1.0]])
    R = np.array(vals[4:13]).reshape(3, 3)
    o = np.array(vals[13:16])
    return CameraParams(K=K, R=R, o=o, width=width, height=height)


def _pack_mesh(mesh: AnimatedMesh) -> bytes:
    verts = mesh.vertices.astype("<f4")
    buf = io.BytesIO()
    buf.write(struct.pack("<IBxxxIII", mesh.object_id, int(mesh.is_static),
                          mesh.n_vertices, mesh.n_times, len(mesh.faces)))
    buf.write(mesh.faces.astype("<u4").tobytes())
    buf.write(zlib.compress(verts.tobytes(), _ZLEVEL))
    return buf.getvalue()


def _unpack_mesh(raw: bytes) -> AnimatedMesh:
    object_id, is_static, nv, nt, nf = struct.unpack_from("<IBxxxIII", raw)
    off = struct.calcsize("<IBxxxIII")
    faces = np.frombuffer(raw, dtype="<u4", count=3 * nf, offset=off)
    faces = faces.reshape(nf, 3).astype(np.int64)
    off += 12 * nf
    verts = np.frombuffer(zlib.decompress(raw[off:]), dtype="<f4")
    verts = verts.reshape(nt, nv, 3)
    return AnimatedMesh(object_id=object_id, vertices=verts, faces=faces,
                        is_static=bool(is_static))


def write_archive(path, *, height: int, width: int, n_times: int,
                  n_cameras: int, cameras: list[CameraParams],
                  meshes: list[AnimatedMesh], frames: list[FrameData],
                  metadata: dict | None = None) -> None:
    """Serialize a clip. ``cameras`` and ``frames`` are in flat frame order."""
    n = n_times * n_cameras
    if len(cameras) != n or len(frames) != n:
        raise ValueError(f"expected {n} cameras and frames")
    has_rgb = any(f.rgb is not None for f in frames)
    if has_rgb and not all(f.rgb is not None for f in frames):
        raise ValueError("RGB must be present for all frames or none")

    meta = dict(metadata or {})
    meta.setdefault("conventions", CONVENTIONS)
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()

    head = struct.pack("<6I8x", height, width, n_times, n_cameras,
                       len(meshes), 1 if has_rgb else 0)
    blobs = [MAGIC + struct.pack("<H", VERSION)]
    blobs.append(_section(b"HEAD", head))
    blobs.append(_section(b"META", meta_bytes))
    blobs.append(_section(b"CAMS", b"".join(_pack_camera(c) for c in cameras)))
    for mesh in sorted(meshes, key=lambda m: m.object_id):
        blobs.append(_section(b"MESH", _pack_mesh(mesh)))

    offset = sum(len(b) for b in blobs)
    index = []
    for f in frames:
        if f.depth.z.shape != (height, width):
            raise ValueError("frame dimension mismatch")
        z = np.where(f.depth.valid, f.depth.z, 0.0).astype("<f4")
        entry = [offset]
        sec = _section(b"DPTH", zlib.compress(z.tobytes(), _ZLEVEL))
        blobs.append(sec)
        offset += len(sec)
        entry.append(offset)
        sec = _section(b"SEGM", zlib.compress(
            f.seg.astype("<u2").tobytes(), _ZLEVEL))
        blobs.append(sec)
        offset += len(sec)
        entry.append(offset)
        sec = _section(b"BARY", zlib.compress(f.bary.to_bytes(), _ZLEVEL))
        blobs.append(sec)
        offset += len(sec)
        if has_rgb:
            entry.append(offset)
            sec = _section(b"RGBF", zlib.compress(
                np.ascontiguousarray(f.rgb, dtype=np.uint8).tobytes(), _ZLEVEL))
            blobs.append(sec)
            offset += len(sec)
        else:
            entry.append(0)
        index.append(entry)

    idx_payload = struct.pack("<I", n) + b"".join(
        struct.pack("<4Q", *e) for e in index)
    blobs.append(_section(b"INDX", idx_payload))
    blobs.append(struct.pack("<Q", offset) + FOOTER_MAGIC)

    with open(path, "wb") as fh:
        for b in blobs:
            fh.write(b)


class _Reader:
    def __init__(self, fh):
        self.fh = fh

    def read_exact(self, n: int) -> bytes:
        data = self.fh.read(n)
        if len(data) != n:
            raise TruncatedError("file ends mid-section")
        return data

    def read_section(self, expect: bytes | None = None) -> tuple[bytes, bytes]:
        tag = self.read_exact(4)
        (length,) = struct.unpack("<Q", self.read_exact(8))
        payload = self.read_exact(length)
        (crc,) = struct.unpack("<I", self.read_exact(4))
        if zlib.crc32(payload) != crc:
            raise ChecksumError(f"CRC mismatch in section {tag!r}")
        if expect is not None and tag != expect:
            raise ArchiveError(f"expected section {expect!r}, found {tag!r}")
        return tag, payload


class ClipArchive:
    """An opened, immutable clip. Safe for any number of concurrent readers
    (each `open()` call owns its file handle; queries share no mutable state
    beyond the lazily built vertex table)."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "rb")
        try:
            self._parse_header()
        except Exception:
            self._fh.close()
            raise

    def _parse_header(self):
        r = _Reader(self._fh)
        try:
            magic = r.read_exact(8)
        except TruncatedError:
            raise TruncatedError("file shorter than the magic preamble")
        if magic != MAGIC:
            raise VersionError(f"bad magic {magic!r}")
        (version,) = struct.unpack("<H", r.read_exact(2))
        if version != VERSION:
            raise VersionError(f"unsupported archive version {version}")

        _, head = r.read_section(b"HEAD")
        (self.height, self.width, self.n_times, self.n_cameras,
         n_meshes, flags) = struct.unpack("<6I8x", head)
        self.has_rgb = bool(flags & 1)
        self.n_frames = self.n_times * self.n_cameras

        _, meta = r.read_section(b"META")
        self.metadata = json.loads(meta.decode())

        _, cams = r.read_section(b"CAMS")
        if len(cams) != 128 * self.n_frames:
            raise ArchiveError("camera table size mismatch")
        self.cameras = [
            _unpack_camera(cams[128 * i:128 * (i + 1)], self.width, self.height)
            for i in range(self.n_frames)
        ]

        self.meshes = []
        for _ in range(n_meshes):
            _, payload = r.read_section(b"MESH")
            self.meshes.append(_unpack_mesh(payload))
        for m in self.meshes:
            if not m.is_static and m.n_times != self.n_times:
                raise ArchiveError("mesh timestep count does not match header")
        self._union = None

        # footer -> frame index
        self._fh.seek(0, 2)
        end = self._fh.tell()
        if end < 12:
            raise TruncatedError("missing footer")
        self._fh.seek(end - 12)
        idx_off_raw = self._fh.read(12)
        if idx_off_raw[8:] != FOOTER_MAGIC:
            raise TruncatedError("footer magic missing (truncated file?)")
        (idx_off,) = struct.unpack("<Q", idx_off_raw[:8])
        if idx_off >= end:
            raise TruncatedError("frame index offset beyond end of file")
        self._fh.seek(idx_off)
        _, idx = r.read_section(b"INDX")
        (count,) = struct.unpack_from("<I", idx)
        if count != self.n_frames:
            raise ArchiveError("frame index count mismatch")
        self._index = [struct.unpack_from("<4Q", idx, 4 + 32 * i)
                       for i in range(count)]

    # -- lifecycle ---------------------------------------------------------

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- raw frame access --------------------------------------------------

    @property
    def union(self) -> SceneUnion:
        if self._union is None:
            self._union = SceneUnion(self.meshes, n_times=self.n_times)
        return self._union

    def frame_id(self, i) -> FrameId:
        if isinstance(i, FrameId):
            return i
        return FrameId.from_flat(int(i), self.n_cameras, self.n_times)

    def camera(self, i) -> CameraParams:
        return self.cameras[self.frame_id(i).flat]

    def _read_at(self, offset: int, expect: bytes) -> bytes:
        self._fh.seek(offset)
        _, payload = _Reader(self._fh).read_section(expect)
        return payload

    def read_depth(self, i) -> DepthMap:
        off = self._index[self.frame_id(i).flat][0]
        z = np.frombuffer(zlib.decompress(self._read_at(off, b"DPTH")),
                          dtype="<f4").reshape(self.height, self.width)
        return DepthMap(z=z.astype(np.float64), valid=z > 0)

    def read_seg(self, i) -> np.ndarray:
        off = self._index[self.frame_id(i).flat][1]
        return np.frombuffer(zlib.decompress(self._read_at(off, b"SEGM")),
                             dtype="<u2").reshape(self.height, self.width)

    def read_bary(self, i) -> BaryMap:
        off = self._index[self.frame_id(i).flat][2]
        return BaryMap.from_bytes(zlib.decompress(self._read_at(off, b"BARY")),
                                  self.height, self.width)

    def read_rgb(self, i) -> np.ndarray:
        if not self.has_rgb:
            raise ArchiveError("archive carries no RGB payload")
        off = self._index[self.frame_id(i).flat][3]
        raw = zlib.decompress(self._read_at(off, b"RGBF"))
        return np.frombuffer(raw, dtype=np.uint8).reshape(
            self.height, self.width, 3)

    # -- queries -----------------------------------------------------------

    def _resolve_ref(self, ref) -> CameraParams | None:
        if ref is None:
            return None
        if isinstance(ref, CameraParams):
            return ref
        return self.camera(ref)

    def query_track(self, i, pixel: tuple[int, int], ref=None
                    ) -> tuple[np.ndarray, str]:
        """Amodal (T, 3) trajectory of the surface point under one pixel.

        Points are reported at every time regardless of occlusion or
        field-of-view exit. ``ref`` selects the output reference frame
        (None = world). Returns the track and its pixel class
        ('dynamic' or 'static').
        """
        fid = self.frame_id(i)
        u, v = pixel
        if not (0 <= u < self.width and 0 <= v < self.height):
            raise IndexError(f"pixel {pixel} out of bounds")
        bary = self.read_bary(fid)
        face = int(bary.face[v, u])
        if face == int(INVALID_FACE):
            raise NoSurfaceError(f"pixel {pixel} has no surface")
        if face == int(STATIC_FACE):
            depth = self.read_depth(fid)
            p = unproject(depth, self.camera(fid), pixel)
            track = np.repeat(p[None, :], self.n_times, axis=0)
            kind = "static"
        else:
            union = self.union
            out = np.empty((1, self.n_times, 3))
            alpha = bary.alphas()[v, u]
            _kernels.decode_tracks(union.vertices_all_times(), union.faces,
                                   np.array([face], dtype=np.int64),
                                   alpha[None, :], out)
            track = out[0]
            kind = "dynamic"
        ref_cam = self._resolve_ref(ref)
        if ref_cam is not None:
            track = world_to_cam(track, ref_cam)
        return track, kind

    def query_tracks_batch(self, frames, pixels, ref=None
                           ) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized query_track over B (frame, pixel) pairs.

        Returns (B, T, 3) tracks and a (B,) validity flag; any out-of-range
        index fails the whole batch before computing anything.
        """
        frames = [self.frame_id(i) for i in frames]
        pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        if len(pixels) != len(frames):
            raise ValueError("frames/pixels length mismatch")
        if np.any(pixels[:, 0] < 0) or np.any(pixels[:, 0] >= self.width) or \
           np.any(pixels[:, 1] < 0) or np.any(pixels[:, 1] >= self.height):
            raise IndexError("pixel out of bounds in batch")
        b = len(frames)
        out = np.zeros((b, self.n_times, 3))
        valid = np.ones(b, dtype=bool)

        order = np.argsort([f.flat for f in frames], kind="stable")
        union = self.union
        verts_time = union.vertices_all_times() if union.n_faces else None
        pos = 0
        while pos < len(order):
            flat = frames[order[pos]].flat
            group = [order[pos]]
            pos += 1
            while pos < len(order) and frames[order[pos]].flat == flat:
                group.append(order[pos])
                pos += 1
            bary = self.read_bary(flat)
            depth = None
            for gi in group:
                u, v = pixels[gi]
                face = int(bary.face[v, u])
                if face == int(INVALID_FACE):
                    valid[gi] = False
                elif face == int(STATIC_FACE):
                    if depth is None:
                        depth = self.read_depth(flat)
                    if not depth.valid[v, u]:
                        valid[gi] = False
                        continue
                    p = unproject(depth, self.cameras[flat], (int(u), int(v)))
                    out[gi, :, :] = p[None, :]
                else:
                    tr = np.empty((1, self.n_times, 3))
                    alpha = bary.alphas()[v, u]
                    _kernels.decode_tracks(verts_time, union.faces,
                                           np.array([face], dtype=np.int64),
                                           alpha[None, :], tr)
                    out[gi] = tr[0]
        ref_cam = self._resolve_ref(ref)
        if ref_cam is not None:
            shape = out.shape
            out = world_to_cam(out.reshape(-1, 3), ref_cam).reshape(shape)
            out[~valid] = 0.0
        return out, valid

    def query_dpm(self, i, ref=None, t_j: int | None = None) -> PointMap:
        """Full-frame point map: pixel u of frame i at time t_j in frame ref.

        Dynamic pixels decode through their barycentric records at ``t_j``;
        static pixels keep their time-constant unprojected position;
        no-surface pixels are masked invalid.
        """
        fid = self.frame_id(i)
        if t_j is None:
            t_j = fid.time
        if not 0 <= t_j < self.n_times:
            raise IndexError(f"time {t_j} out of [0, {self.n_times})")
        depth = self.read_depth(fid)
        bary = self.read_bary(fid)
        cam = self.camera(fid)

        pts = unproject_map(depth, cam).points
        dyn = bary.dynamic
        if dyn.any():
            union = self.union
            faces_q = bary.face[dyn].astype(np.int64)
            alphas_q = bary.alphas()[dyn]
            out = np.empty((len(faces_q), 1, 3))
            _kernels.decode_tracks(
                np.ascontiguousarray(union.vertices_all_times()[t_j:t_j + 1]),
                union.faces, faces_q, alphas_q, out)
            pts[dyn] = out[:, 0, :]
        valid = ~bary.invalid & depth.valid
        pts[~valid] = 0.0
        pm = PointMap(points=pts, valid=valid)
        ref_cam = self._resolve_ref(ref)
        if ref_cam is not None:
            shape = pm.points.shape
            p = world_to_cam(pm.points.reshape(-1, 3), ref_cam).reshape(shape)
            p[~valid] = 0.0
            pm = PointMap(points=p, valid=valid)
        return pm

    # -- accounting ---------------------------------------------------------

    def size_report(self) -> dict:
        import os

        actual = os.path.getsize(self.path)
        dense = storage_estimate(self.height, self.width, self.n_times,
                                 self.n_cameras, mode="dense")["bytes"]
        compact = storage_estimate(
            self.height, self.width, self.n_times, self.n_cameras,
            n_vertices=self.union.n_vertices, mode="compact")
        rgb = storage_estimate(self.height, self.width, self.n_times,
                               self.n_cameras, mode="rgb")["bytes"]
        return {
            "actual_bytes": actual,
            "dense_equivalent_bytes": dense,
            "compact_estimate_bytes": compact["bytes"],
            "pixel_record_bytes": compact["pixel_record_bytes"],
            "vertex_track_bytes": compact["vertex_track_bytes"],
            "raw_rgb_bytes": rgb,
            "dense_to_actual_ratio": dense / actual,
        }


def read_archive(path) -> ClipArchive:
    """Open a clip archive for reading."""
    return ClipArchive(path)
