export {
  ALPHA_SCALE,
  ArchiveError,
  ChecksumError,
  ClipArchive,
  INVALID_FACE,
  STATIC_FACE,
  TruncatedError,
  VersionError,
  crc32,
  unprojectPixel,
} from "./archive.js";
export type { BaryMap, Camera, Mesh, PointMap, TrackBatch } from "./archive.js";
