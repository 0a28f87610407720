/**
 * Minimal PNG decoder for the subset the pipeline produces: 8-bit,
 * grayscale / gray+alpha / RGB / RGBA, non-interlaced. Returns float
 * channels in [0, 1], grayscale expanded to RGB.
 */

import * as zlib from "zlib";

export interface RasterImage {
  width: number;
  height: number;
  channels: 3 | 4;
  /** row-major (row, col, channel) values in [0, 1] */
  data: Float32Array;
}

const PNG_SIGNATURE = Buffer.from([137, 80, 78, 71, 13, 10, 26, 10]);

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export function decodePng(buf: Buffer): RasterImage {
  if (!buf.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new Error("not a PNG file");
  }
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  let interlace = 0;
  const idat: Buffer[] = [];
  let off = 8;
  while (off < buf.length) {
    const length = buf.readUInt32BE(off);
    const type = buf.toString("ascii", off + 4, off + 8);
    const body = buf.subarray(off + 8, off + 8 + length);
    if (type === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      bitDepth = body[8];
      colorType = body[9];
      interlace = body[12];
    } else if (type === "IDAT") {
      idat.push(body);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + length;
  }
  if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
  if (interlace !== 0) throw new Error("interlaced PNG not supported");
  const srcChannels = { 0: 1, 2: 3, 4: 2, 6: 4 }[colorType];
  if (srcChannels === undefined) {
    throw new Error(`unsupported color type ${colorType}`);
  }
  const raw = zlib.inflateSync(Buffer.concat(idat));
  const stride = width * srcChannels;
  if (raw.length < height * (stride + 1)) {
    throw new Error("truncated PNG pixel data");
  }
  // undo per-row filters in place
  const pixels = Buffer.alloc(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const out = pixels.subarray(y * stride, (y + 1) * stride);
    const prev = y > 0 ? pixels.subarray((y - 1) * stride, y * stride) : null;
    for (let x = 0; x < stride; x++) {
      const a = x >= srcChannels ? out[x - srcChannels] : 0;
      const b = prev ? prev[x] : 0;
      const c = x >= srcChannels && prev ? prev[x - srcChannels] : 0;
      let v = row[x];
      switch (filter) {
        case 0: break;
        case 1: v = (v + a) & 0xff; break;
        case 2: v = (v + b) & 0xff; break;
        case 3: v = (v + ((a + b) >> 1)) & 0xff; break;
        case 4: v = (v + paeth(a, b, c)) & 0xff; break;
        default: throw new Error(`unknown PNG filter ${filter}`);
      }
      out[x] = v;
    }
  }
  const hasAlpha = colorType === 4 || colorType === 6;
  const channels: 3 | 4 = hasAlpha ? 4 : 3;
  const data = new Float32Array(width * height * channels);
  for (let i = 0; i < width * height; i++) {
    const s = i * srcChannels;
    const d = i * channels;
    if (colorType === 0 || colorType === 4) {
      const g = pixels[s] / 255;
      data[d] = g; data[d + 1] = g; data[d + 2] = g;
      if (hasAlpha) data[d + 3] = pixels[s + 1] / 255;
    } else {
      data[d] = pixels[s] / 255;
      data[d + 1] = pixels[s + 1] / 255;
      data[d + 2] = pixels[s + 2] / 255;
      if (hasAlpha) data[d + 3] = pixels[s + 3] / 255;
    }
  }
  return { width, height, channels, data };
}

/** Composite RGBA over white and drop the alpha channel. */
export function toRgb(img: RasterImage): RasterImage {
  if (img.channels === 3) return img;
  const out = new Float32Array(img.width * img.height * 3);
  for (let i = 0; i < img.width * img.height; i++) {
    const a = img.data[i * 4 + 3];
    for (let c = 0; c < 3; c++) {
      out[i * 3 + c] = img.data[i * 4 + c] * a + (1 - a);
    }
  }
  return { width: img.width, height: img.height, channels: 3, data: out };
}
