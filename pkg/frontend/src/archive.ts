/**
 * Reader for `.t4d` clip archives (see ../../docs/archive_format.md).
 *
 * Every byte layout and every arithmetic step here follows the format
 * document exactly, so decoded tracks and point maps are bit-identical to
 * the reference engine: all math runs in IEEE-754 doubles with the
 * documented operation order.
 *
 * Frame payloads are read lazily (seek via the frame index) and returned
 * as zero-copy typed-array views over the decompressed buffers.
 */

import { closeSync, fstatSync, openSync, readSync } from "node:fs";
import { inflateSync } from "node:zlib";

export class ArchiveError extends Error {}
/** Unknown magic or unsupported format version. */
export class VersionError extends ArchiveError {}
/** A section payload failed its CRC-32 check. */
export class ChecksumError extends ArchiveError {}
/** The file ends before a complete section or footer. */
export class TruncatedError extends ArchiveError {}

export const INVALID_FACE = 0xffff_ffff;
export const STATIC_FACE = 0xffff_fffe;
export const ALPHA_SCALE = 65535.0;

const MAGIC = "T4DCLIP\0";
const FOOTER_MAGIC = "T4DE";
const VERSION = 1;

/** CRC-32 (zlib polynomial), table-driven. */
const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export interface Camera {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  /** Row-major world-to-camera rotation. */
  R: Float64Array;
  /** Camera center in world units. */
  o: Float64Array;
}

export interface Mesh {
  objectId: number;
  isStatic: boolean;
  nVertices: number;
  nTimes: number;
  nFaces: number;
  /** (nFaces * 3) mesh-local vertex indices. */
  faces: Uint32Array;
  /** (nTimes * nVertices * 3) float32 positions. */
  vertices: Float32Array;
}

export interface BaryMap {
  /** (H*W) face indices; INVALID_FACE / STATIC_FACE are pixel classes. */
  face: Uint32Array;
  q1: Uint16Array;
  q2: Uint16Array;
}

export interface PointMap {
  /** (H*W*3) row-major positions; zeros where invalid. */
  points: Float64Array;
  valid: Uint8Array;
}

export interface TrackBatch {
  /** (B*T*3) row-major trajectories; zeros where invalid. */
  tracks: Float64Array;
  valid: Uint8Array;
}

interface Section {
  tag: string;
  payload: Buffer;
}

/** An opened, immutable clip archive. */
export class ClipArchive {
  readonly height: number;
  readonly width: number;
  readonly nTimes: number;
  readonly nCameras: number;
  readonly nFrames: number;
  readonly hasRgb: boolean;
  readonly metadata: Record<string, unknown>;
  readonly cameras: Camera[];
  readonly meshes: Mesh[];

  private fd: number;
  private fileSize: number;
  /** Per-frame absolute offsets of [DPTH, SEGM, BARY, RGBF]. */
  private index: BigUint64Array;
  /** Lazily built (T * Vtot * 3) union vertex table in doubles. */
  private vertsTime: Float64Array | null = null;
  /** (Ftot * 3) union face table. */
  private unionFaces: Uint32Array | null = null;
  private totalVertices = 0;

  private constructor(path: string) {
    this.fd = openSync(path, "r");
    try {
      this.fileSize = fstatSync(this.fd).size;
      const preamble = this.readExact(0, 10);
      if (preamble.toString("latin1", 0, 8) !== MAGIC) {
        throw new VersionError("bad magic");
      }
      const version = preamble.readUInt16LE(8);
      if (version !== VERSION) {
        throw new VersionError(`unsupported archive version ${version}`);
      }

      let pos = 10;
      const head = this.readSection(pos, "HEAD");
      pos += 16 + head.payload.length;
      this.height = head.payload.readUInt32LE(0);
      this.width = head.payload.readUInt32LE(4);
      this.nTimes = head.payload.readUInt32LE(8);
      this.nCameras = head.payload.readUInt32LE(12);
      const nMeshes = head.payload.readUInt32LE(16);
      this.hasRgb = (head.payload.readUInt32LE(20) & 1) !== 0;
      this.nFrames = this.nTimes * this.nCameras;

      const meta = this.readSection(pos, "META");
      pos += 16 + meta.payload.length;
      this.metadata = JSON.parse(meta.payload.toString("utf8"));

      const cams = this.readSection(pos, "CAMS");
      pos += 16 + cams.payload.length;
      if (cams.payload.length !== 128 * this.nFrames) {
        throw new ArchiveError("camera table size mismatch");
      }
      this.cameras = [];
      for (let i = 0; i < this.nFrames; i++) {
        const b = 128 * i;
        const R = new Float64Array(9);
        const o = new Float64Array(3);
        for (let k = 0; k < 9; k++) R[k] = cams.payload.readDoubleLE(b + 32 + 8 * k);
        for (let k = 0; k < 3; k++) o[k] = cams.payload.readDoubleLE(b + 104 + 8 * k);
        this.cameras.push({
          fx: cams.payload.readDoubleLE(b),
          fy: cams.payload.readDoubleLE(b + 8),
          cx: cams.payload.readDoubleLE(b + 16),
          cy: cams.payload.readDoubleLE(b + 24),
          R,
          o,
        });
      }

      this.meshes = [];
      for (let m = 0; m < nMeshes; m++) {
        const sec = this.readSection(pos, "MESH");
        pos += 16 + sec.payload.length;
        this.meshes.push(parseMesh(sec.payload));
      }

      // footer locates the frame index
      if (this.fileSize < 12) throw new TruncatedError("missing footer");
      const footer = this.readExact(this.fileSize - 12, 12);
      if (footer.toString("latin1", 8, 12) !== FOOTER_MAGIC) {
        throw new TruncatedError("footer magic missing (truncated file?)");
      }
      const idxOff = footer.readBigUInt64LE(0);
      if (idxOff >= BigInt(this.fileSize)) {
        throw new TruncatedError("frame index offset beyond end of file");
      }
      const idx = this.readSection(Number(idxOff), "INDX").payload;
      const count = idx.readUInt32LE(0);
      if (count !== this.nFrames) {
        throw new ArchiveError("frame index count mismatch");
      }
      this.index = new BigUint64Array(4 * count);
      for (let i = 0; i < 4 * count; i++) {
        this.index[i] = idx.readBigUInt64LE(4 + 8 * i);
      }
    } catch (err) {
      closeSync(this.fd);
      this.fd = -1;
      throw err;
    }
  }

  static open(path: string): ClipArchive {
    return new ClipArchive(path);
  }

  close(): void {
    if (this.fd >= 0) {
      closeSync(this.fd);
      this.fd = -1;
    }
  }

  // -- low-level reads -------------------------------------------------------

  private readExact(offset: number, length: number): Buffer {
    if (offset + length > this.fileSize) {
      throw new TruncatedError("file ends mid-section");
    }
    const buf = Buffer.allocUnsafe(length);
    let got = 0;
    while (got < length) {
      const n = readSync(this.fd, buf, got, length - got, offset + got);
      if (n <= 0) throw new TruncatedError("file ends mid-section");
      got += n;
    }
    return buf;
  }

  private readSection(offset: number, expect: string): Section {
    const framing = this.readExact(offset, 12);
    const tag = framing.toString("latin1", 0, 4);
    const length = Number(framing.readBigUInt64LE(4));
    const payload = this.readExact(offset + 12, length);
    const crc = this.readExact(offset + 12 + length, 4).readUInt32LE(0);
    if (crc32(payload) !== crc) {
      throw new ChecksumError(`CRC mismatch in section ${tag}`);
    }
    if (tag !== expect) {
      throw new ArchiveError(`expected section ${expect}, found ${tag}`);
    }
    return { tag, payload };
  }

  private framePayload(frame: number, slot: number, tag: string): Buffer {
    if (frame < 0 || frame >= this.nFrames) {
      throw new RangeError(`frame ${frame} out of [0, ${this.nFrames})`);
    }
    const off = Number(this.index[4 * frame + slot]);
    return aligned(inflateSync(this.readSection(off, tag).payload));
  }

  // -- frame payloads --------------------------------------------------------

  /** (H*W) float32 camera-frame z; 0 marks no surface. Zero-copy view. */
  readDepth(frame: number): Float32Array {
    const raw = this.framePayload(frame, 0, "DPTH");
    return new Float32Array(raw.buffer, raw.byteOffset, this.height * this.width);
  }

  /** (H*W) uint16 object ids; 0 is static surface or background. */
  readSeg(frame: number): Uint16Array {
    const raw = this.framePayload(frame, 1, "SEGM");
    return new Uint16Array(raw.buffer, raw.byteOffset, this.height * this.width);
  }

  readBary(frame: number): BaryMap {
    const raw = this.framePayload(frame, 2, "BARY");
    const words = new Uint32Array(raw.buffer, raw.byteOffset, 2 * this.height * this.width);
    const n = this.height * this.width;
    const face = new Uint32Array(n);
    const q1 = new Uint16Array(n);
    const q2 = new Uint16Array(n);
    for (let i = 0; i < n; i++) {
      face[i] = words[2 * i];
      const packed = words[2 * i + 1];
      q1[i] = packed & 0xffff;
      q2[i] = packed >>> 16;
    }
    return { face, q1, q2 };
  }

  /** (H*W*3) uint8 RGB. Zero-copy view. */
  readRgb(frame: number): Uint8Array {
    if (!this.hasRgb) throw new ArchiveError("archive carries no RGB payload");
    const raw = this.framePayload(frame, 3, "RGBF");
    return new Uint8Array(raw.buffer, raw.byteOffset, 3 * this.height * this.width);
  }

  // -- union mesh table ------------------------------------------------------

  private buildUnion(): void {
    if (this.vertsTime !== null) return;
    let vTotal = 0;
    let fTotal = 0;
    for (const m of this.meshes) {
      vTotal += m.nVertices;
      fTotal += m.nFaces;
    }
    this.totalVertices = vTotal;
    const T = this.nTimes;
    const verts = new Float64Array(T * vTotal * 3);
    const faces = new Uint32Array(fTotal * 3);
    let vOff = 0;
    let fOff = 0;
    for (const m of this.meshes) {
      for (let k = 0; k < 3 * m.nFaces; k++) faces[3 * fOff + k] = m.faces[k] + vOff;
      for (let t = 0; t < T; t++) {
        const srcT = m.isStatic ? 0 : t;
        const src = srcT * m.nVertices * 3;
        const dst = (t * vTotal + vOff) * 3;
        for (let k = 0; k < 3 * m.nVertices; k++) {
          verts[dst + k] = m.vertices[src + k];
        }
      }
      vOff += m.nVertices;
      fOff += m.nFaces;
    }
    this.vertsTime = verts;
    this.unionFaces = faces;
  }

  // -- queries ---------------------------------------------------------------

  /**
   * Decode full trajectories for B (frame, pixel) pairs.
   *
   * `pixels` holds (u, v) pairs flattened to length 2B. Any out-of-range
   * frame or pixel rejects the whole batch. Invalid (no-surface) pixels
   * get valid=0 and zero tracks. `ref` re-expresses the output in that
   * frame's camera; omit for world coordinates.
   */
  sampleTracks(frames: ArrayLike<number>, pixels: ArrayLike<number>, ref?: number): TrackBatch {
    const b = frames.length;
    if (pixels.length !== 2 * b) {
      throw new RangeError("frames/pixels length mismatch");
    }
    for (let i = 0; i < b; i++) {
      const f = frames[i];
      if (!Number.isInteger(f) || f < 0 || f >= this.nFrames) {
        throw new RangeError(`frame ${f} out of [0, ${this.nFrames})`);
      }
      const u = pixels[2 * i];
      const v = pixels[2 * i + 1];
      if (u < 0 || u >= this.width || v < 0 || v >= this.height) {
        throw new RangeError(`pixel (${u}, ${v}) out of bounds`);
      }
    }
    this.buildUnion();
    const T = this.nTimes;
    const tracks = new Float64Array(b * T * 3);
    const valid = new Uint8Array(b).fill(1);

    // group queries by frame so each payload is read once
    const order = Array.from({ length: b }, (_, i) => i).sort(
      (x, y) => frames[x] - frames[y] || x - y,
    );
    let pos = 0;
    while (pos < order.length) {
      const frame = frames[order[pos]];
      const group: number[] = [];
      while (pos < order.length && frames[order[pos]] === frame) {
        group.push(order[pos]);
        pos += 1;
      }
      const bary = this.readBary(frame);
      let depth: Float32Array | null = null;
      for (const qi of group) {
        const u = pixels[2 * qi];
        const v = pixels[2 * qi + 1];
        const pix = v * this.width + u;
        const face = bary.face[pix];
        if (face === INVALID_FACE) {
          valid[qi] = 0;
        } else if (face === STATIC_FACE) {
          if (depth === null) depth = this.readDepth(frame);
          const z = depth[pix];
          if (z <= 0) {
            valid[qi] = 0;
            continue;
          }
          const p = unprojectPixel(z, u, v, this.cameras[frame]);
          for (let t = 0; t < T; t++) {
            tracks[(qi * T + t) * 3] = p[0];
            tracks[(qi * T + t) * 3 + 1] = p[1];
            tracks[(qi * T + t) * 3 + 2] = p[2];
          }
        } else {
          this.decodeTrack(face, bary.q1[pix], bary.q2[pix], tracks, qi * T * 3);
        }
      }
    }
    if (ref !== undefined) {
      this.toCameraFrame(tracks, ref);
      for (let qi = 0; qi < b; qi++) {
        if (!valid[qi]) tracks.fill(0, qi * T * 3, (qi + 1) * T * 3);
      }
    }
    return { tracks, valid };
  }

  /**
   * Full-frame point map: every pixel of `frame` at time `tj`, expressed
   * in `ref`'s camera frame (world when omitted).
   */
  dpmFrame(frame: number, ref?: number, tj?: number): PointMap {
    if (frame < 0 || frame >= this.nFrames) {
      throw new RangeError(`frame ${frame} out of [0, ${this.nFrames})`);
    }
    const t = tj === undefined ? Math.floor(frame / this.nCameras) : tj;
    if (t < 0 || t >= this.nTimes) {
      throw new RangeError(`time ${t} out of [0, ${this.nTimes})`);
    }
    this.buildUnion();
    const { height: h, width: w } = this;
    const depth = this.readDepth(frame);
    const bary = this.readBary(frame);
    const cam = this.cameras[frame];
    const points = new Float64Array(h * w * 3);
    const valid = new Uint8Array(h * w);
    const verts = this.vertsTime!;
    const faces = this.unionFaces!;
    const vBase = t * this.totalVertices * 3;
    for (let v = 0; v < h; v++) {
      for (let u = 0; u < w; u++) {
        const pix = v * w + u;
        const face = bary.face[pix];
        const z = depth[pix];
        if (face === INVALID_FACE || z <= 0) continue;
        valid[pix] = 1;
        if (face === STATIC_FACE) {
          const p = unprojectPixel(z, u, v, cam);
          points[3 * pix] = p[0];
          points[3 * pix + 1] = p[1];
          points[3 * pix + 2] = p[2];
        } else {
          const a1 = bary.q1[pix] / ALPHA_SCALE;
          const a2 = bary.q2[pix] / ALPHA_SCALE;
          const a3 = 1.0 - a1 - a2;
          const i0 = vBase + 3 * faces[3 * face];
          const i1 = vBase + 3 * faces[3 * face + 1];
          const i2 = vBase + 3 * faces[3 * face + 2];
          for (let k = 0; k < 3; k++) {
            points[3 * pix + k] =
              a1 * verts[i0 + k] + a2 * verts[i1 + k] + a3 * verts[i2 + k];
          }
        }
      }
    }
    if (ref !== undefined) {
      this.toCameraFrame(points, ref);
      for (let pix = 0; pix < h * w; pix++) {
        if (!valid[pix]) {
          points[3 * pix] = points[3 * pix + 1] = points[3 * pix + 2] = 0;
        }
      }
    }
    return { points, valid };
  }

  /** Decode one barycentric record over all timesteps into `out[at..]`. */
  private decodeTrack(face: number, q1: number, q2: number, out: Float64Array, at: number): void {
    const a1 = q1 / ALPHA_SCALE;
    const a2 = q2 / ALPHA_SCALE;
    const a3 = 1.0 - a1 - a2;
    const faces = this.unionFaces!;
    const verts = this.vertsTime!;
    const f0 = 3 * faces[3 * face];
    const f1 = 3 * faces[3 * face + 1];
    const f2 = 3 * faces[3 * face + 2];
    const stride = this.totalVertices * 3;
    for (let t = 0; t < this.nTimes; t++) {
      const base = t * stride;
      for (let k = 0; k < 3; k++) {
        out[at + 3 * t + k] =
          a1 * verts[base + f0 + k] +
          a2 * verts[base + f1 + k] +
          a3 * verts[base + f2 + k];
      }
    }
  }

  /** In-place world -> camera(ref) transform of packed xyz triples. */
  private toCameraFrame(xyz: Float64Array, ref: number): void {
    if (ref < 0 || ref >= this.nFrames) {
      throw new RangeError(`reference frame ${ref} out of [0, ${this.nFrames})`);
    }
    const { R, o } = this.cameras[ref];
    for (let i = 0; i < xyz.length; i += 3) {
      const d0 = xyz[i] - o[0];
      const d1 = xyz[i + 1] - o[1];
      const d2 = xyz[i + 2] - o[2];
      xyz[i] = R[0] * d0 + R[1] * d1 + R[2] * d2;
      xyz[i + 1] = R[3] * d0 + R[4] * d1 + R[5] * d2;
      xyz[i + 2] = R[6] * d0 + R[7] * d1 + R[8] * d2;
    }
  }
}

/** Typed-array views need 4-byte alignment; pooled Buffers may lack it. */
function aligned(buf: Buffer): Buffer {
  if (buf.byteOffset % 4 === 0) return buf;
  const copy = Buffer.alloc(buf.length); // alloc() is unpooled => offset 0
  buf.copy(copy);
  return copy;
}

function parseMesh(payload: Buffer): Mesh {
  const objectId = payload.readUInt32LE(0);
  const isStatic = payload.readUInt8(4) !== 0;
  const nVertices = payload.readUInt32LE(8);
  const nTimes = payload.readUInt32LE(12);
  const nFaces = payload.readUInt32LE(16);
  const facesBytes = payload.subarray(20, 20 + 12 * nFaces);
  const faces = new Uint32Array(3 * nFaces);
  for (let k = 0; k < 3 * nFaces; k++) faces[k] = facesBytes.readUInt32LE(4 * k);
  const raw = aligned(inflateSync(payload.subarray(20 + 12 * nFaces)));
  const vertices = new Float32Array(raw.buffer, raw.byteOffset, nTimes * nVertices * 3);
  return { objectId, isStatic, nVertices, nTimes, nFaces, faces, vertices };
}

/**
 * Unproject one depth sample through a zero-skew pinhole camera; the
 * scalar op order matches the format document so results are bitwise
 * reproducible across implementations.
 */
export function unprojectPixel(
  z: number,
  u: number,
  v: number,
  cam: Camera,
): [number, number, number] {
  const x = z * (u + 0.5);
  const y = z * (v + 0.5);
  const pc0 = (x - cam.cx * z) / cam.fx;
  const pc1 = (y - cam.cy * z) / cam.fy;
  const pc2 = z;
  const { R, o } = cam;
  return [
    R[0] * pc0 + R[3] * pc1 + R[6] * pc2 + o[0],
    R[1] * pc0 + R[4] * pc1 + R[7] * pc2 + o[1],
    R[2] * pc0 + R[5] * pc1 + R[8] * pc2 + o[2],
  ];
}
