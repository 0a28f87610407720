"""Differentiable anti-aliased rasterizer.

Images are (H, W, C) float64 arrays with values in [0, 1], C = 3 or 4;
pixel (row, col) has its center at (col + 0.5, row + 0.5).

Coverage model: per-path fractional coverage is a smoothed function of the
signed distance to the path boundary (smootherstep kernel, smoothing radius
1 px), with the sign decided by the nonzero winding rule at the pixel
center.  Coverage is therefore C1 in the control points, and `backward`
returns the exact gradient of that model for every control point and fill
color.  Compositing is straight alpha over an explicit RGB background:
out = (1 - alpha * opacity) * below + alpha * opacity * fill, in z-order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from . import bezier
from .errors import ContractError

SMOOTH_RADIUS = 1.0          # px; half-width of the coverage transition band
_BAND_PAD = 2                # px (Chebyshev) dilation around the boundary
_NEWTON_ITERS = 8

__all__ = ["render", "backward", "RenderTape", "PathGrad",
           "path_coverage", "hard_mask", "read_png", "write_png"]


@dataclass
class PathGrad:
    points: np.ndarray      # (d, 2) gradient in canvas units
    fill: np.ndarray        # (3,)


@dataclass
class _PathTape:
    alpha: np.ndarray            # (H, W) coverage (before opacity)
    below: np.ndarray            # (H, W, 3) composite under this path
    band_rows: np.ndarray
    band_cols: np.ndarray
    d_alpha_d_sd: np.ndarray     # per band pixel
    seg_idx: np.ndarray
    bern: np.ndarray             # (nband, 4) Bernstein weights at t*
    normal_signed: np.ndarray    # (nband, 2) sign * (p - B(t*)) / dist


@dataclass
class RenderTape:
    """Opaque record for one render; backward() may consume it once."""

    doc: object
    width: int
    height: int
    scale: tuple
    paths: list = field(default_factory=list)
    used: bool = False


def _smootherstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (u * (6.0 * u - 15.0) + 10.0)


def _smootherstep_prime(u):
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 30.0 * u ** 2 * (1.0 - u) ** 2, 0.0)


def _flatten_px(points_px):
    """Adaptive closed-polyline flattening of a spline in pixel coords."""
    segs = bezier.segments_of(points_px)
    hull_len = np.linalg.norm(np.diff(segs, axis=1), axis=2).sum(axis=1)
    polys = []
    seg_ids = []
    for k, seg in enumerate(segs):
        n = int(np.clip(np.ceil(hull_len[k] / 0.5), 8, 96))
        t = np.arange(n) / n
        polys.append(bezier.evaluate(seg[None, :, :], t[:, None]).reshape(-1, 2))
        seg_ids.append(np.full(n, k))
    return np.concatenate(polys), np.concatenate(seg_ids)


def _winding_inside(poly, width, height):
    """Nonzero-winding inside test at all pixel centers (vectorized scanline)."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    ay, by = a[:, 1], b[:, 1]
    up = by > ay
    y_lo = np.where(up, ay, by)
    y_hi = np.where(up, by, ay)
    # Rows whose center y = row + 0.5 satisfies y_lo <= y < y_hi.
    r0 = np.maximum(np.ceil(y_lo - 0.5).astype(int), 0)
    r1 = np.minimum(np.ceil(y_hi - 0.5).astype(int), height)
    counts = np.maximum(r1 - r0, 0)
    if counts.sum() == 0:
        return np.zeros((height, width), dtype=bool)
    edge_of = np.repeat(np.arange(len(a)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    rows = r0[edge_of] + offs
    yc = rows + 0.5
    denom = by[edge_of] - ay[edge_of]
    x_int = a[edge_of, 0] + (yc - ay[edge_of]) * (b[edge_of, 0] - a[edge_of, 0]) / denom
    direction = np.where(up[edge_of], 1, -1)
    # Crossing at x_int affects pixels with center x < x_int.
    cols = np.clip(np.ceil(x_int - 0.5).astype(int), 0, width)
    diff = np.zeros((height, width + 1), dtype=np.int64)
    np.add.at(diff, (rows, np.zeros_like(cols)), direction)
    np.add.at(diff, (rows, cols), -direction)
    winding = np.cumsum(diff, axis=1)[:, :width]
    return winding != 0


def _band_mask(poly, width, height):
    """Pixels within ~_BAND_PAD (Chebyshev) of the polyline."""
    seg = np.roll(poly, -1, axis=0) - poly
    lens = np.linalg.norm(seg, axis=1)
    n_sub = np.maximum((lens / 0.5).astype(int) + 1, 1)
    t = (np.arange(n_sub.sum()) - np.repeat(np.cumsum(n_sub) - n_sub, n_sub))
    t = t / np.repeat(n_sub, n_sub)
    pts = poly[np.repeat(np.arange(len(poly)), n_sub)] + \
        seg[np.repeat(np.arange(len(poly)), n_sub)] * t[:, None]
    mask = np.zeros((height, width), dtype=bool)
    cols = np.clip(pts[:, 0].astype(int), 0, width - 1)
    rows = np.clip(pts[:, 1].astype(int), 0, height - 1)
    inside = (pts[:, 0] > -_BAND_PAD) & (pts[:, 0] < width + _BAND_PAD) & \
             (pts[:, 1] > -_BAND_PAD) & (pts[:, 1] < height + _BAND_PAD)
    mask[rows[inside], cols[inside]] = True
    return ndimage.binary_dilation(mask, structure=np.ones((3, 3), bool),
                                   iterations=_BAND_PAD)


def _nearest_on_spline(segs, px, py):
    """Global nearest point on the spline for query points (px, py).

    Every segment is refined independently (guarded Newton from its best
    knot) and the minimum is taken across segments, so basin mix-ups at
    shared anchors cannot occur.  Returns (seg_idx, t, dist, normal);
    normal is the unit vector from the curve point toward the query
    (zeros when dist ~ 0).
    """
    nseg = len(segs)
    npix = len(px)
    if npix == 0:
        z = np.zeros(0)
        return z.astype(int), z, z, np.zeros((0, 2)), z
    k_t = np.linspace(0.0, 1.0, 17)
    knots = bezier.evaluate(segs[:, None, :, :],
                            np.broadcast_to(k_t, (nseg, 17)))   # (nseg, 17, 2)
    q = np.stack([px, py], axis=1)
    # (npix, nseg, 17) squared distances to every knot of every segment.
    dx = px[:, None, None] - knots[None, :, :, 0]
    dy = py[:, None, None] - knots[None, :, :, 1]
    d2 = dx * dx + dy * dy
    t_init = k_t[np.argmin(d2, axis=2)]              # (npix, nseg)
    d2_seg = d2.min(axis=2)
    d_lo = np.sqrt(d2_seg.min(axis=1))
    # Saturated pixels: the knot distance already proves |sd| > radius, so
    # coverage is exactly 0/1 with zero derivative; skip the refinement.
    hull_len = np.linalg.norm(np.diff(segs, axis=1), axis=2).sum(axis=1)
    slack = float(hull_len.max()) / 32.0
    seg_idx = np.zeros(npix, dtype=int)
    t_out = np.zeros(npix)
    dist = np.maximum(d_lo, SMOOTH_RADIUS * 1.001)
    normal = np.zeros((npix, 2))
    side = np.zeros(npix)
    act = np.nonzero(d_lo < SMOOTH_RADIUS + slack)[0]
    if len(act):
        # Power-basis coefficients: B(t) = c0 + t(c1 + t(c2 + t*c3)).
        c0 = segs[:, 0, :]
        c1 = 3.0 * (segs[:, 1, :] - segs[:, 0, :])
        c2 = 3.0 * (segs[:, 2, :] - 2.0 * segs[:, 1, :] + segs[:, 0, :])
        c3 = segs[:, 3, :] - 3.0 * segs[:, 2, :] + 3.0 * segs[:, 1, :] - segs[:, 0, :]
        # Refine the two best candidate segments per active pixel (the two
        # share a knot exactly at anchors, where the runner-up matters).
        ncand = min(2, nseg)
        cand = np.argsort(d2_seg[act], axis=1)[:, :ncand]
        t = t_init[act[:, None], cand]
        k0, k1, k2, k3 = c0[cand], c1[cand], c2[cand], c3[cand]
        qb = q[act, None, :]
        for _ in range(_NEWTON_ITERS):
            tt = t[..., None]
            b = k0 + tt * (k1 + tt * (k2 + tt * k3))
            db = k1 + tt * (2.0 * k2 + 3.0 * tt * k3)
            d2b = 2.0 * k2 + 6.0 * tt * k3
            r = qb - b
            g = -(r * db).sum(axis=2)
            h = (db * db).sum(axis=2) - (r * d2b).sum(axis=2)
            step = g / np.where(np.abs(h) > 1e-9, np.abs(h), 1e-9)
            t = np.clip(t - np.clip(step, -0.25, 0.25), 0.0, 1.0)
        tt = t[..., None]
        b = k0 + tt * (k1 + tt * (k2 + tt * k3))
        dvec = qb - b
        dist_c = np.sqrt((dvec * dvec).sum(axis=2))  # (nact, ncand)
        pick = np.argmin(dist_c, axis=1)
        arows = np.arange(len(act))
        sidx = cand[arows, pick]
        ttp = t[arows, pick]
        dd = dist_c[arows, pick]
        r = dvec[arows, pick]
        safe = dd > 1e-12
        nn = np.where(safe[:, None], r / np.where(safe, dd, 1.0)[:, None], 0.0)
        tf = ttp[:, None]
        tang = c1[sidx] + tf * (2.0 * c2[sidx] + 3.0 * tf * c3[sidx])
        seg_idx[act] = sidx
        t_out[act] = ttp
        dist[act] = dd
        normal[act] = nn
        side[act] = np.sign(tang[:, 0] * r[:, 1] - tang[:, 1] * r[:, 0])
    return seg_idx, t_out, dist, normal, side


def path_coverage(path, width, height, scale=(1.0, 1.0), with_tape=False):
    """Smoothed fractional coverage of one path on a width x height grid."""
    pts_px = np.asarray(path.points, dtype=float) * np.asarray(scale)
    poly, _ = _flatten_px(pts_px)
    inside = _winding_inside(poly, width, height)
    band = _band_mask(poly, width, height)
    alpha = inside.astype(float)
    rows, cols = np.nonzero(band)
    if len(rows):
        segs = bezier.segments_of(pts_px)
        seg_idx, t, dist, normal, side = _nearest_on_spline(
            segs, cols + 0.5, rows + 0.5)
        # Within half a pixel of the curve the local tangent side test is
        # exact where the flattened winding test can stray by the sagitta;
        # beyond that the global winding (nonzero rule) decides.
        orient = np.sign(np.sum(poly[:, 0] * np.roll(poly[:, 1], -1)
                                - np.roll(poly[:, 0], -1) * poly[:, 1])) or 1.0
        sign_wind = np.where(inside[rows, cols], 1.0, -1.0)
        sign_loc = side * orient
        sign = np.where((dist < 0.5) & (sign_loc != 0), sign_loc, sign_wind)
        sd = sign * dist
        u = (sd + SMOOTH_RADIUS) / (2.0 * SMOOTH_RADIUS)
        alpha[rows, cols] = _smootherstep(u)
        if with_tape:
            d_alpha = _smootherstep_prime(u) / (2.0 * SMOOTH_RADIUS)
            tape = _PathTape(alpha=alpha, below=None, band_rows=rows,
                             band_cols=cols, d_alpha_d_sd=d_alpha,
                             seg_idx=seg_idx, bern=bezier.bernstein(t),
                             normal_signed=sign[:, None] * normal)
            return alpha, tape
    if with_tape:
        tape = _PathTape(alpha=alpha, below=None, band_rows=rows,
                         band_cols=cols,
                         d_alpha_d_sd=np.zeros(len(rows)),
                         seg_idx=np.zeros(len(rows), dtype=int),
                         bern=np.zeros((len(rows), 4)),
                         normal_signed=np.zeros((len(rows), 2)))
        return alpha, tape
    return alpha


def hard_mask(path, width, height, scale=(1.0, 1.0)):
    """Unsmoothed inside test (winding at pixel centers)."""
    pts_px = np.asarray(path.points, dtype=float) * np.asarray(scale)
    poly, _ = _flatten_px(pts_px)
    return _winding_inside(poly, width, height)


def render(doc, width, height, background=(1.0, 1.0, 1.0)):
    """Render doc to an (H, W, 3) image plus a tape for backward().

    Paths are composited in z-order over the background using the smoothed
    coverage model; deterministic for fixed inputs.
    """
    if width < 8 or height < 8:
        raise ContractError(f"render size must be >= 8, got {width}x{height}")
    scale = (width / doc.width, height / doc.height)
    img = np.empty((height, width, 3), dtype=float)
    img[:] = np.asarray(background, dtype=float)
    tape = RenderTape(doc=doc, width=width, height=height, scale=scale)
    for path in doc.paths:
        alpha, ptape = path_coverage(path, width, height, scale, with_tape=True)
        ptape.below = img.copy()
        a = (alpha * path.opacity)[:, :, None]
        img = (1.0 - a) * img + a * np.asarray(path.fill)
        tape.paths.append(ptape)
    return img, tape


def backward(tape, dL_dI):
    """Backpropagate an image-space gradient to control points and fills.

    Returns one PathGrad per path (gradients exact for the smoothed
    coverage model used by render).  A tape may be consumed only once.
    """
    if tape.used:
        raise ContractError("RenderTape already consumed by backward()")
    tape.used = True
    dL_dI = np.asarray(dL_dI, dtype=float)
    if dL_dI.shape != (tape.height, tape.width, 3):
        raise ContractError(
            f"gradient shape {dL_dI.shape} != render shape "
            f"{(tape.height, tape.width, 3)}")
    sx, sy = tape.scale
    grads = [None] * len(tape.doc.paths)
    trans = np.ones((tape.height, tape.width))   # transmittance above layer k
    for k in range(len(tape.doc.paths) - 1, -1, -1):
        path = tape.doc.paths[k]
        pt = tape.paths[k]
        fill = np.asarray(path.fill)
        a = pt.alpha * path.opacity
        w = dL_dI * trans[:, :, None]
        dfill = (w * a[:, :, None]).sum(axis=(0, 1))
        # d out / d a = fill - below (per channel), summed over channels.
        dL_da = (w * (fill[None, None, :] - pt.below)).sum(axis=2)
        dpts = np.zeros_like(np.asarray(path.points), dtype=float)
        if len(pt.band_rows):
            g_sd = (dL_da[pt.band_rows, pt.band_cols] * path.opacity
                    * pt.d_alpha_d_sd)
            # d sd / d P_i = -(signed normal) * bernstein_i(t*)
            contrib = -g_sd[:, None, None] * pt.bern[:, :, None] \
                * pt.normal_signed[:, None, :]
            d = len(dpts)
            rows_idx = (pt.seg_idx[:, None] * 3 + np.arange(4)[None, :]) % d
            np.add.at(dpts, rows_idx.ravel(),
                      contrib.reshape(-1, 2))
        dpts[:, 0] *= sx
        dpts[:, 1] *= sy
        grads[k] = PathGrad(points=dpts, fill=dfill)
        trans = trans * (1.0 - a)
    return grads


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

def read_png(fp):
    """Load a PNG as an (H, W, C) float array in [0, 1] (C = 3 or 4)."""
    with PILImage.open(fp) as im:
        if im.mode not in ("RGB", "RGBA"):
            im = im.convert("RGBA" if "A" in im.mode or im.mode == "P" else "RGB")
        return np.asarray(im, dtype=float) / 255.0


def write_png(fp, img):
    """Write an (H, W, C) float array in [0, 1] to PNG (8-bit per channel)."""
    img = np.asarray(img)
    data = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    mode = {3: "RGB", 4: "RGBA"}[img.shape[2]]
    PILImage.fromarray(data, mode).save(fp, format="PNG")
