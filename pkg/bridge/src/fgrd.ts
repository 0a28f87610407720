/**
 * FGRD feature-grid container. Normative layout (shared with the main
 * pipeline): magic "FGRD", six little-endian u32 fields
 * [version=1, gh, gw, channels, patch, dtype=0], then gh*gw*channels
 * little-endian float32 values, row-major (row, col, channel).
 */

export interface FeatureGrid {
  gh: number;
  gw: number;
  channels: number;
  patch: number;
  data: Float32Array; // length gh * gw * channels
}

export const FGRD_MAGIC = "FGRD";
export const FGRD_VERSION = 1;

export function encodeFgrd(grid: FeatureGrid): Buffer {
  const n = grid.gh * grid.gw * grid.channels;
  if (grid.data.length !== n) {
    throw new Error(`grid data length ${grid.data.length} != ${n}`);
  }
  const buf = Buffer.alloc(4 + 24 + n * 4);
  buf.write(FGRD_MAGIC, 0, "ascii");
  buf.writeUInt32LE(FGRD_VERSION, 4);
  buf.writeUInt32LE(grid.gh, 8);
  buf.writeUInt32LE(grid.gw, 12);
  buf.writeUInt32LE(grid.channels, 16);
  buf.writeUInt32LE(grid.patch, 20);
  buf.writeUInt32LE(0, 24); // dtype float32
  for (let i = 0; i < n; i++) {
    buf.writeFloatLE(grid.data[i], 28 + i * 4);
  }
  return buf;
}

export function decodeFgrd(buf: Buffer): FeatureGrid {
  if (buf.toString("ascii", 0, 4) !== FGRD_MAGIC) {
    throw new Error("not an FGRD file");
  }
  const version = buf.readUInt32LE(4);
  if (version !== FGRD_VERSION) throw new Error(`bad FGRD version ${version}`);
  const gh = buf.readUInt32LE(8);
  const gw = buf.readUInt32LE(12);
  const channels = buf.readUInt32LE(16);
  const patch = buf.readUInt32LE(20);
  const dtype = buf.readUInt32LE(24);
  if (dtype !== 0) throw new Error(`bad FGRD dtype ${dtype}`);
  const n = gh * gw * channels;
  if (buf.length < 28 + n * 4) throw new Error("truncated FGRD payload");
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    data[i] = buf.readFloatLE(28 + i * 4);
  }
  return { gh, gw, channels, patch, data };
}
