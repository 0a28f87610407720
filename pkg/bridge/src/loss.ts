/**
 * Image-level loss and embeddings for the wire service.
 *
 * "pyramid-v1" measures the squared L2 distance between linear feature
 * stacks of the two images: box-downsampled color at four dyadic levels
 * plus luminance gradients at each level, each level equally weighted and
 * mean-normalized. Linearity gives two properties the protocol tests rely
 * on: the gradient is exact, and the loss is strictly decreasing along any
 * straight-line blend toward the target.
 */

import { RasterImage, toRgb } from "./png";

export const LOSS_MODEL = "pyramid-v1";
export const EMBED_MODEL = "pyramid-embed-v1";
const LEVELS = 4;

interface Plane {
  w: number;
  h: number;
  data: Float64Array; // 3 channels row-major
}

function toPlane(img: RasterImage): Plane {
  const rgb = toRgb(img);
  return { w: img.width, h: img.height,
           data: Float64Array.from(rgb.data) };
}

function downsample(p: Plane): Plane {
  const hw = Math.max(1, p.w >> 1);
  const hh = Math.max(1, p.h >> 1);
  const out = new Float64Array(hw * hh * 3);
  for (let y = 0; y < hh; y++) {
    for (let x = 0; x < hw; x++) {
      const x1 = Math.min(2 * x + 1, p.w - 1);
      const y1 = Math.min(2 * y + 1, p.h - 1);
      for (let c = 0; c < 3; c++) {
        out[(y * hw + x) * 3 + c] = 0.25 * (
          p.data[(2 * y * p.w + 2 * x) * 3 + c]
          + p.data[(2 * y * p.w + x1) * 3 + c]
          + p.data[(y1 * p.w + 2 * x) * 3 + c]
          + p.data[(y1 * p.w + x1) * 3 + c]);
      }
    }
  }
  return { w: hw, h: hh, data: out };
}

/** Adjoint of `downsample` (scatter the coarse gradient to fine pixels). */
function upsampleGrad(g: Plane, fw: number, fh: number): Plane {
  const out = new Float64Array(fw * fh * 3);
  for (let y = 0; y < g.h; y++) {
    for (let x = 0; x < g.w; x++) {
      const x1 = Math.min(2 * x + 1, fw - 1);
      const y1 = Math.min(2 * y + 1, fh - 1);
      for (let c = 0; c < 3; c++) {
        const v = 0.25 * g.data[(y * g.w + x) * 3 + c];
        out[(2 * y * fw + 2 * x) * 3 + c] += v;
        out[(2 * y * fw + x1) * 3 + c] += v;
        out[(y1 * fw + 2 * x) * 3 + c] += v;
        out[(y1 * fw + x1) * 3 + c] += v;
      }
    }
  }
  return { w: fw, h: fh, data: out };
}

/**
 * Loss and dL/dI for a rendered image against the configured target.
 * Both images must share dimensions; the gradient has the rendered
 * image's shape with 3 channels.
 */
export function lossGrad(rendered: RasterImage, target: RasterImage):
  { loss: number; grad: Float32Array } {
  if (rendered.width !== target.width || rendered.height !== target.height) {
    throw new Error(
      `image sizes differ: ${rendered.width}x${rendered.height} vs ` +
      `${target.width}x${target.height}`);
  }
  let a = toPlane(rendered);
  let b = toPlane(target);
  const diffs: Plane[] = [];
  let loss = 0;
  for (let level = 0; level < LEVELS; level++) {
    const n = a.w * a.h * 3;
    const diff = new Float64Array(n);
    let acc = 0;
    for (let i = 0; i < n; i++) {
      const d = a.data[i] - b.data[i];
      diff[i] = (2 * d) / n;
      acc += d * d;
    }
    loss += acc / n;
    diffs.push({ w: a.w, h: a.h, data: diff });
    if (level < LEVELS - 1) {
      a = downsample(a);
      b = downsample(b);
    }
  }
  let grad = diffs[LEVELS - 1];
  for (let level = LEVELS - 2; level >= 0; level--) {
    const up = upsampleGrad(grad, diffs[level].w, diffs[level].h);
    for (let i = 0; i < up.data.length; i++) {
      up.data[i] += diffs[level].data[i];
    }
    grad = up;
  }
  return { loss, grad: Float32Array.from(grad.data) };
}

export const EMBED_DIM = 32;

/**
 * Global image embedding: per-level channel means (12), an 8-bin
 * orientation histogram of luminance gradients at two levels (16), plus
 * gradient energy statistics (4); L2-normalized.
 */
export function embedImage(img: RasterImage): Float32Array {
  const out = new Float64Array(EMBED_DIM);
  let plane = toPlane(img);
  for (let level = 0; level < LEVELS; level++) {
    const n = plane.w * plane.h;
    for (let c = 0; c < 3; c++) {
      let acc = 0;
      for (let i = 0; i < n; i++) acc += plane.data[i * 3 + c];
      out[level * 3 + c] = acc / n;
    }
    if (level === 0 || level === 1) {
      const histBase = 12 + level * 8;
      let energy = 0;
      let count = 0;
      for (let y = 1; y < plane.h - 1; y++) {
        for (let x = 1; x < plane.w - 1; x++) {
          const lum = (i: number) => 0.2126 * plane.data[i * 3]
            + 0.7152 * plane.data[i * 3 + 1] + 0.0722 * plane.data[i * 3 + 2];
          const dx = 0.5 * (lum(y * plane.w + x + 1) - lum(y * plane.w + x - 1));
          const dy = 0.5 * (lum((y + 1) * plane.w + x) - lum((y - 1) * plane.w + x));
          const mag = Math.hypot(dx, dy);
          if (mag < 1e-6) continue;
          let ang = Math.atan2(dy, dx);
          if (ang < 0) ang += Math.PI;
          const b = Math.min(Math.floor((ang / Math.PI) * 8), 7);
          out[histBase + b] += mag;
          energy += mag;
          count++;
        }
      }
      out[28 + level * 2] = energy / Math.max(plane.w * plane.h, 1);
      out[28 + level * 2 + 1] = count / Math.max(plane.w * plane.h, 1);
    }
    if (level < LEVELS - 1) plane = downsample(plane);
  }
  let norm = 0;
  for (let i = 0; i < EMBED_DIM; i++) norm += out[i] * out[i];
  norm = Math.sqrt(norm) || 1;
  const res = new Float32Array(EMBED_DIM);
  for (let i = 0; i < EMBED_DIM; i++) res[i] = out[i] / norm;
  return res;
}

/** Deterministic bag-of-trigrams text embedding (mock; real text-image
 * similarity needs a joint vision-language model). */
export function embedText(text: string): Float32Array {
  const out = new Float64Array(EMBED_DIM);
  const s = `  ${text.toLowerCase()}  `;
  for (let i = 0; i + 3 <= s.length; i++) {
    let h = 2166136261;
    for (let k = i; k < i + 3; k++) {
      h = Math.imul(h ^ s.charCodeAt(k), 16777619);
    }
    out[(h >>> 0) % EMBED_DIM] += 1;
  }
  let norm = 0;
  for (let i = 0; i < EMBED_DIM; i++) norm += out[i] * out[i];
  norm = Math.sqrt(norm) || 1;
  const res = new Float32Array(EMBED_DIM);
  for (let i = 0; i < EMBED_DIM; i++) res[i] = out[i] / norm;
  return res;
}
