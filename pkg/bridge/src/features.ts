/**
 * Dense per-patch feature extraction.
 *
 * The default "structural-v1" encoder is deterministic and self-contained:
 * per 8x8 patch it pools orientation histograms of luminance gradients at
 * two scales plus edge-density statistics. Histograms are contrast
 * normalized, which makes the descriptor insensitive to palette changes
 * while staying highly shape selective; that is exactly the regime where
 * plain color/position descriptors mismatch.
 *
 * The encoder registry keeps the model pluggable: a pretrained transformer
 * can be slotted in behind the same signature when its weights are
 * available locally.
 */

import { RasterImage, toRgb } from "./png";
import { FeatureGrid } from "./fgrd";

export const DEFAULT_MODEL = "structural-v1";
export const ORIENT_BINS = 8;

function luminance(img: RasterImage): Float32Array {
  const rgb = toRgb(img);
  const out = new Float32Array(img.width * img.height);
  for (let i = 0; i < out.length; i++) {
    out[i] = 0.2126 * rgb.data[i * 3] + 0.7152 * rgb.data[i * 3 + 1]
      + 0.0722 * rgb.data[i * 3 + 2];
  }
  return out;
}

function boxHalf(src: Float32Array, w: number, h: number):
  { data: Float32Array; w: number; h: number } {
  const hw = Math.max(1, w >> 1);
  const hh = Math.max(1, h >> 1);
  const out = new Float32Array(hw * hh);
  for (let y = 0; y < hh; y++) {
    for (let x = 0; x < hw; x++) {
      const x1 = Math.min(2 * x + 1, w - 1);
      const y1 = Math.min(2 * y + 1, h - 1);
      out[y * hw + x] = 0.25 * (src[2 * y * w + 2 * x] + src[2 * y * w + x1]
        + src[y1 * w + 2 * x] + src[y1 * w + x1]);
    }
  }
  return { data: out, w: hw, h: hh };
}

/**
 * Accumulate gradient-orientation histograms (unsigned, ORIENT_BINS bins
 * over half a turn) for each patch cell of the given grid geometry.
 */
function orientationHistograms(
  lum: Float32Array, w: number, h: number,
  gh: number, gw: number, cellPx: number,
): { hist: Float64Array; energy: Float64Array } {
  const hist = new Float64Array(gh * gw * ORIENT_BINS);
  const energy = new Float64Array(gh * gw);
  for (let y = 0; y < h; y++) {
    const y0 = Math.max(y - 1, 0) * w;
    const y1 = Math.min(y + 1, h - 1) * w;
    const gy = Math.min(Math.floor(y / cellPx), gh - 1);
    for (let x = 0; x < w; x++) {
      const gxp = Math.min(x + 1, w - 1);
      const gxm = Math.max(x - 1, 0);
      const dx = 0.5 * (lum[y * w + gxp] - lum[y * w + gxm]);
      const dy = 0.5 * (lum[y1 + x] - lum[y0 + x]);
      const mag = Math.hypot(dx, dy);
      if (mag < 1e-6) continue;
      const gx = Math.min(Math.floor(x / cellPx), gw - 1);
      // unsigned orientation in [0, pi): invariant to contrast inversion
      let ang = Math.atan2(dy, dx);
      if (ang < 0) ang += Math.PI;
      if (ang >= Math.PI) ang -= Math.PI;
      const pos = (ang / Math.PI) * ORIENT_BINS;
      const b0 = Math.min(Math.floor(pos), ORIENT_BINS - 1);
      const frac = pos - b0;
      const cell = (gy * gw + gx) * ORIENT_BINS;
      hist[cell + b0] += mag * (1 - frac);
      hist[cell + (b0 + 1) % ORIENT_BINS] += mag * frac;
      energy[gy * gw + gx] += mag;
    }
  }
  return { hist, energy };
}

/** structural-v1: 8 fine orientation bins + 8 coarse bins + edge density. */
export function structuralGrid(img: RasterImage, patch = 8): FeatureGrid {
  if (patch < 4) throw new Error(`patch must be >= 4, got ${patch}`);
  const gh = Math.ceil(img.height / patch);
  const gw = Math.ceil(img.width / patch);
  const lum = luminance(img);
  const fine = orientationHistograms(lum, img.width, img.height, gh, gw, patch);
  const halfImg = boxHalf(lum, img.width, img.height);
  const coarse = orientationHistograms(
    halfImg.data, halfImg.w, halfImg.h, gh, gw, patch / 2);
  const channels = 2 * ORIENT_BINS + 1;
  const data = new Float32Array(gh * gw * channels);
  for (let cell = 0; cell < gh * gw; cell++) {
    const out = cell * channels;
    const nf = fine.energy[cell] + 1e-6;
    const nc = coarse.energy[cell] + 1e-6;
    for (let b = 0; b < ORIENT_BINS; b++) {
      data[out + b] = fine.hist[cell * ORIENT_BINS + b] / nf;
      data[out + ORIENT_BINS + b] =
        0.5 * coarse.hist[cell * ORIENT_BINS + b] / nc;
    }
    // edge density: gradient energy per pixel, softly saturated
    data[out + 2 * ORIENT_BINS] =
      0.5 * Math.tanh(fine.energy[cell] / (patch * patch * 0.05));
  }
  return { gh, gw, channels, patch, data };
}

export type Encoder = (img: RasterImage, patch: number) => FeatureGrid;

const REGISTRY: Record<string, Encoder> = {
  "structural-v1": (img, patch) => structuralGrid(img, patch),
};

export function getEncoder(model: string): Encoder {
  const enc = REGISTRY[model];
  if (!enc) {
    throw new Error(
      `model '${model}' unavailable (known: ${Object.keys(REGISTRY).join(", ")})`);
  }
  return enc;
}
