"""Build the initial customized SVG: CPD-aligned exemplar paths for matched
components, fresh Bezier fits for unmatched ones.

The matched route estimates an affine map from the exemplar path boundary
onto the convex hull of the target component with coherent point drift
(GMM EM with an outlier term); the unmatched route is Schneider-style
least-squares cubic fitting of the component contour with corner detection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bezier
from .errors import DegenerateHullError
from .raster import hard_mask
from .svgcore import Path, SvgDoc, sample_boundary

__all__ = ["AffineTransform", "InitialSvg", "convex_hull", "cpd_affine",
           "transform_path", "fit_path_to_boundary", "build_initial_svg",
           "smooth_closed_polyline", "resample_closed_polyline"]

CPD_OUTLIER_WEIGHT = 0.1
CPD_MAX_ITER = 100
CPD_TOL = 1e-6
CPD_SAMPLES = 100
FIT_ERR_TOL = 1.0
MAX_FIT_POINTS = 180
CORNER_ANGLE_DEG = 60.0
HULL_SMOOTH_WINDOW = 5


@dataclass
class AffineTransform:
    B: np.ndarray                 # 2x2 linear part
    t: np.ndarray                 # translation
    converged: bool = True

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float).reshape(2, 2)
        self.t = np.asarray(self.t, dtype=float).reshape(2)
        if abs(np.linalg.det(self.B)) < 1e-12:
            raise ValueError("degenerate affine transform (det ~ 0)")

    def apply(self, pts):
        return np.asarray(pts, dtype=float) @ self.B.T + self.t

    def coefficients(self):
        """(a, b, c, d, e, f) with x' = a x + c y + e, y' = b x + d y + f
        (SVG matrix order)."""
        return (self.B[0, 0], self.B[1, 0], self.B[0, 1], self.B[1, 1],
                self.t[0], self.t[1])


@dataclass
class InitialSvg:
    doc: SvgDoc
    provenance: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Convex hull and polyline utilities
# ---------------------------------------------------------------------------

def convex_hull(points):
    """Counter-clockwise convex hull (monotone chain); strictly convex
    output (no three collinear vertices)."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        raise DegenerateHullError(f"need >= 3 distinct points, got {len(pts)}")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DegenerateHullError("all points collinear")
    return hull


def smooth_closed_polyline(poly, window=3):
    """Cyclic moving average; window must be odd."""
    poly = np.asarray(poly, dtype=float)
    if window <= 1 or len(poly) <= window:
        return poly.copy()
    half = window // 2
    out = poly.copy()
    for k in range(1, half + 1):
        out = out + np.roll(poly, k, axis=0) + np.roll(poly, -k, axis=0)
    return out / (2 * half + 1)


def resample_closed_polyline(poly, n):
    """n arc-length-uniform samples along a closed polyline."""
    poly = np.asarray(poly, dtype=float)
    seg = np.roll(poly, -1, axis=0) - poly
    lens = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    total = cum[-1]
    if total <= 0:
        return np.tile(poly[0], (n, 1))
    s = np.arange(n) * (total / n)
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(poly) - 1)
    frac = (s - cum[k]) / np.where(lens[k] > 0, lens[k], 1.0)
    return poly[k] + seg[k] * frac[:, None]


# ---------------------------------------------------------------------------
# Coherent point drift, affine flavor
# ---------------------------------------------------------------------------

def _similarity_fallback(source, target):
    """Centroid + RMS-scale similarity estimate (no rotation)."""
    mx = target.mean(axis=0)
    my = source.mean(axis=0)
    sy = np.sqrt(((source - my) ** 2).sum(axis=1).mean())
    sx = np.sqrt(((target - mx) ** 2).sum(axis=1).mean())
    s = sx / sy if sy > 1e-12 else 1.0
    return AffineTransform(B=np.eye(2) * s, t=mx - s * my, converged=False)


def _cpd_em(Xn, Yn, B0, w, max_iter, tol):
    """One EM run from a given linear init; returns (B, t, nll, converged)."""
    n, d = Xn.shape
    m = Yn.shape[0]
    B = np.asarray(B0, dtype=float)
    t = np.zeros(d)
    TY = Yn @ B.T + t
    sigma2 = ((Xn[:, None, :] - TY[None, :, :]) ** 2).sum() / (d * n * m)
    prev_nll = None
    nll = np.inf
    converged = False
    for _ in range(max_iter):
        diff2 = ((Xn[:, None, :] - TY[None, :, :]) ** 2).sum(axis=2)
        gauss = np.exp(-diff2 / (2.0 * sigma2))
        c = (2.0 * np.pi * sigma2) ** (d / 2.0) * (w / max(1.0 - w, 1e-12)) \
            * (m / n)
        denom = gauss.sum(axis=1) + c
        P = gauss / denom[:, None]                     # (n, m)
        nll = -np.log(denom).sum() \
            + n * (d / 2.0) * np.log(2.0 * np.pi * sigma2)
        Np = P.sum()
        if Np < 1e-12:
            break
        p1 = P.sum(axis=0)                              # (m,)
        pt1 = P.sum(axis=1)                             # (n,)
        mu_x = (Xn.T @ pt1) / Np
        mu_y = (Yn.T @ p1) / Np
        Xh = Xn - mu_x
        Yh = Yn - mu_y
        A = Xh.T @ P @ Yh
        G = (Yh * p1[:, None]).T @ Yh
        try:
            B_new = A @ np.linalg.inv(G)
        except np.linalg.LinAlgError:
            break
        t = mu_x - B_new @ mu_y
        tr1 = float((Xh * Xh * pt1[:, None]).sum())
        tr2 = float(np.trace(A @ B_new.T))
        sigma2 = max((tr1 - tr2) / (Np * d), 1e-12)
        B = B_new
        TY = Yn @ B.T + t
        if prev_nll is not None and abs(prev_nll - nll) < tol * abs(prev_nll):
            converged = True
            break
        prev_nll = nll
    return B, t, float(nll), converged


def _sqrtm_2x2(cov):
    evals, evecs = np.linalg.eigh(cov)
    return evecs @ np.diag(np.sqrt(np.maximum(evals, 1e-12))) @ evecs.T


def cpd_affine(source, target, w=CPD_OUTLIER_WEIGHT, max_iter=CPD_MAX_ITER,
               tol=CPD_TOL):
    """Affine transform mapping source points onto target points by EM on
    the CPD Gaussian mixture with outlier weight w.

    EM is restarted from a small deterministic bank of inits (identity plus
    the second-moment match composed with eight trial rotations) and the
    best final likelihood wins, which makes large rotations recoverable.
    A run converges when the relative change of the negative log-likelihood
    drops below tol (or stops at max_iter and reports converged=False).
    Falls back to a centroid/RMS similarity estimate if the linear part
    degenerates.
    """
    X = np.asarray(target, dtype=float)
    Y = np.asarray(source, dtype=float)
    if len(X) < 3 or len(Y) < 3:
        raise ValueError("need >= 3 points on both sides")
    n, d = X.shape
    # Normalize both sets for conditioning; compose the transform back at
    # the end.
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    sx = max(np.sqrt(((X - mx) ** 2).sum(axis=1).mean()), 1e-12)
    sy = max(np.sqrt(((Y - my) ** 2).sum(axis=1).mean()), 1e-12)
    Xn = (X - mx) / sx
    Yn = (Y - my) / sy

    inits = [np.eye(d)]
    try:
        moment = _sqrtm_2x2(np.cov(Xn.T)) @ np.linalg.inv(_sqrtm_2x2(np.cov(Yn.T)))
        for k in range(8):
            a = k * np.pi / 4.0
            rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
            inits.append(moment @ rot)
    except np.linalg.LinAlgError:
        pass

    best = None
    for B0 in inits:
        B, t, nll, conv = _cpd_em(Xn, Yn, B0, w, max_iter, tol)
        if best is None or nll < best[2] - 1e-12:
            best = (B, t, nll, conv)
    B, t, _, converged = best

    # Undo normalization: x = sx * (B (y - my)/sy + t) + mx.
    B_full = (sx / sy) * B
    t_full = mx + sx * t - B_full @ my
    det = abs(np.linalg.det(B_full))
    if not np.isfinite(det) or det < 1e-3 or det > 1e3:
        return _similarity_fallback(Y, X)
    return AffineTransform(B=B_full, t=t_full, converged=converged)


def _project_to_polyline(pts, poly):
    """Nearest points on a closed polyline for each query point."""
    seg = np.roll(poly, -1, axis=0) - poly
    L2 = np.maximum((seg ** 2).sum(axis=1), 1e-12)
    # (npts, nseg) projection parameters clamped to the segments.
    t = ((pts[:, None, :] - poly[None, :, :]) * seg[None, :, :]).sum(axis=2) / L2
    t = np.clip(t, 0.0, 1.0)
    proj = poly[None, :, :] + seg[None, :, :] * t[:, :, None]
    d2 = ((proj - pts[:, None, :]) ** 2).sum(axis=2)
    best = np.argmin(d2, axis=1)
    rows = np.arange(len(pts))
    return proj[rows, best], np.sqrt(d2[rows, best])


def refine_affine_to_contour(xf, src_pts, contour, iterations=5):
    """Polish an affine estimate with trimmed nearest-point least squares
    onto the (lightly smoothed) component contour.

    The CPD estimate works off the convex hull, which rides the outer
    staircase corners of the pixel contour; a few trimmed ICP iterations
    against the full contour average that quantization noise away.  The
    trim is adaptive: correspondences well beyond the median residual are
    treated as occlusion outliers, everything else contributes."""
    src = np.asarray(src_pts, dtype=float)
    poly = smooth_closed_polyline(np.asarray(contour, dtype=float), 3)
    if len(poly) < 4:
        return xf
    B, t = xf.B, xf.t
    for _ in range(iterations):
        cur = src @ B.T + t
        proj, dist = _project_to_polyline(cur, poly)
        cutoff = max(2.0 * float(np.median(dist)), float(np.median(dist)) + 1.0)
        keep = np.nonzero(dist <= cutoff)[0]
        if len(keep) < 6:
            break
        A = np.concatenate([src[keep], np.ones((len(keep), 1))], axis=1)
        sol, _, _, _ = np.linalg.lstsq(A, proj[keep], rcond=None)
        B_new = sol[:2].T
        t_new = sol[2]
        if abs(np.linalg.det(B_new)) < 1e-6:
            break
        B, t = B_new, t_new
    return AffineTransform(B=B, t=t, converged=xf.converged)


def transform_path(path, xf, fill=None, opacity=None, path_id=None):
    """Map every control point through the affine transform; optionally
    re-fill and re-identify the result (used when cloning per component)."""
    pts = xf.apply(path.points)
    return Path(points=pts,
                fill=path.fill if fill is None else fill,
                opacity=path.opacity if opacity is None else opacity,
                id=path.id if path_id is None else path_id)


# ---------------------------------------------------------------------------
# Contour fitting (Schneider-style least squares with corner detection)
# ---------------------------------------------------------------------------

def _fit_arc(pts, tan0, tan1, err_tol, depth=0, max_depth=12):
    """Fit cubic segments to an open run of points with prescribed end
    tangents; recursively split until the max deviation <= err_tol."""
    if len(pts) == 2:
        dist = np.linalg.norm(pts[1] - pts[0]) / 3.0
        return [np.array([pts[0], pts[0] + tan0 * dist,
                          pts[1] + tan1 * dist, pts[1]])]
    u = _chord_parameterize(pts)
    curve = _generate_bezier(pts, u, tan0, tan1)
    err, split = _max_error(pts, curve, u)
    if err <= err_tol * err_tol:
        return [curve]
    if err <= 4.0 * err_tol * err_tol:
        for _ in range(6):
            u = _reparameterize(curve, pts, u)
            curve = _generate_bezier(pts, u, tan0, tan1)
            err, split = _max_error(pts, curve, u)
            if err <= err_tol * err_tol:
                return [curve]
    if depth >= max_depth or len(pts) <= 3:
        return [curve]
    split = int(np.clip(split, 1, len(pts) - 2))
    center = pts[max(split - 1, 0)] - pts[min(split + 1, len(pts) - 1)]
    nrm = np.linalg.norm(center)
    center = center / nrm if nrm > 1e-12 else np.array([1.0, 0.0])
    left = _fit_arc(pts[:split + 1], tan0, center, err_tol, depth + 1, max_depth)
    right = _fit_arc(pts[split:], -center, tan1, err_tol, depth + 1, max_depth)
    return left + right


def _chord_parameterize(pts):
    u = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0),
                                                        axis=1))])
    return u / max(u[-1], 1e-12)


def _generate_bezier(pts, u, tan0, tan1):
    mt = 1.0 - u
    b1 = 3.0 * mt ** 2 * u
    b2 = 3.0 * mt * u ** 2
    a0 = tan0[None, :] * b1[:, None]
    a1 = tan1[None, :] * b2[:, None]
    c00 = (a0 * a0).sum()
    c01 = (a0 * a1).sum()
    c11 = (a1 * a1).sum()
    base = (mt ** 3 + b1)[:, None] * pts[0] + (u ** 3 + b2)[:, None] * pts[-1]
    rhs = pts - base
    x0 = (a0 * rhs).sum()
    x1 = (a1 * rhs).sum()
    det = c00 * c11 - c01 * c01
    alpha0 = alpha1 = 0.0
    if abs(det) > 1e-12:
        alpha0 = (x0 * c11 - x1 * c01) / det
        alpha1 = (c00 * x1 - c01 * x0) / det
    seg_len = np.linalg.norm(pts[-1] - pts[0])
    eps = 1e-6 * seg_len
    if alpha0 < eps or alpha1 < eps:
        alpha0 = alpha1 = seg_len / 3.0
    return np.array([pts[0], pts[0] + tan0 * alpha0,
                     pts[-1] + tan1 * alpha1, pts[-1]])


def _max_error(pts, curve, u):
    smp = bezier.evaluate(curve[None, :, :], u[:, None]).reshape(-1, 2)
    d2 = ((smp - pts) ** 2).sum(axis=1)
    idx = int(np.argmax(d2))
    return float(d2[idx]), idx


def _reparameterize(curve, pts, u):
    smp = bezier.evaluate(curve[None, :, :], u[:, None]).reshape(-1, 2)
    d1 = bezier.derivative(curve[None, :, :], u[:, None]).reshape(-1, 2)
    d2 = bezier.second_derivative(curve[None, :, :], u[:, None]).reshape(-1, 2)
    diff = smp - pts
    num = (diff * d1).sum(axis=1)
    den = (d1 * d1).sum(axis=1) + (diff * d2).sum(axis=1)
    return np.clip(np.where(np.abs(den) > 1e-12, u - num / den, u), 0.0, 1.0)


def _detect_corners(poly):
    """Indices whose turning angle over a 5-point window exceeds the corner
    threshold, non-maximum-suppressed within 3 samples."""
    n = len(poly)
    v1 = poly - np.roll(poly, 2, axis=0)
    v2 = np.roll(poly, -2, axis=0) - poly
    ang = np.abs(np.arctan2(v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0],
                            (v1 * v2).sum(axis=1)))
    cand = np.nonzero(ang > np.radians(CORNER_ANGLE_DEG))[0]
    corners = []
    for i in sorted(cand, key=lambda i: -ang[i]):
        if all(min((i - j) % n, (j - i) % n) > 3 for j in corners):
            corners.append(i)
    return sorted(corners)


def _ellipse_fallback(boundary, err_tol):
    """Moment-fitted 4-arc ellipse for degenerate contours."""
    pts = np.asarray(boundary, dtype=float)
    c = pts.mean(axis=0)
    cov = np.cov((pts - c).T) + np.eye(2) * 0.25
    evals, evecs = np.linalg.eigh(cov)
    r1, r2 = np.sqrt(np.maximum(evals, 0.25)) * np.sqrt(2.0)
    k = 0.5522847498307936
    out = []
    anchors = [(r2, 0), (0, r1), (-r2, 0), (0, -r1)]
    handles = [(0, k * r1), (-k * r2, 0), (0, -k * r1), (k * r2, 0)]
    for i in range(4):
        a = np.array(anchors[i], dtype=float)
        h = np.array(handles[i], dtype=float)
        nxt = np.array(anchors[(i + 1) % 4], dtype=float)
        hn = np.array(handles[(i + 1) % 4], dtype=float)
        out += [a, a + h, nxt - hn]
    local = np.array(out) @ np.column_stack([evecs[:, 1], evecs[:, 0]]).T
    return local + c


def fit_path_to_boundary(boundary, err_tol=FIT_ERR_TOL, fill=(0.0, 0.0, 0.0),
                         path_id="fitted"):
    """Fit a closed cubic spline to a closed pixel contour.

    Corners (turning angle above 60 degrees over a 5-point window on the
    lightly smoothed contour) become segment endpoints with one-sided
    tangents; arcs between them are least-squares cubics subdivided until
    the deviation is below err_tol.  The result has d divisible by 3 and
    d <= 180.  Too-small contours fall back to a moment-fitted ellipse.
    """
    poly = np.asarray(boundary, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2:
        raise ValueError("boundary must be (N, 2)")
    if len(poly) >= 2 and np.allclose(poly[0], poly[-1]):
        poly = poly[:-1]
    area2 = np.sum(poly[:, 0] * np.roll(poly[:, 1], -1)
                   - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area2 < 0:
        poly = poly[::-1].copy()
    if len(poly) < 8 or abs(area2) < 4.0:
        pts = _ellipse_fallback(poly, err_tol)
        return Path(points=pts, fill=fill, id=path_id)

    smooth = smooth_closed_polyline(poly, 3)
    corners = _detect_corners(smooth)
    n = len(poly)

    def tangent_at(i, one_sided=None):
        if one_sided == "out":
            v = smooth[(i + 2) % n] - smooth[i]
        elif one_sided == "in":
            v = smooth[i] - smooth[(i - 2) % n]
        else:
            v = smooth[(i + 2) % n] - smooth[(i - 2) % n]
        nn = np.linalg.norm(v)
        return v / nn if nn > 1e-12 else np.array([1.0, 0.0])

    if len(corners) >= 2:
        anchors = corners
        sided = True
    elif len(corners) == 1:
        anchors = [corners[0], (corners[0] + n // 2) % n]
        sided = True
    else:
        anchors = [0, n // 2]
        sided = False

    segs = []
    for a_i in range(len(anchors)):
        i0 = anchors[a_i]
        i1 = anchors[(a_i + 1) % len(anchors)]
        if i1 > i0:
            run = poly[i0:i1 + 1]
        else:
            run = np.concatenate([poly[i0:], poly[:i1 + 1]])
        if len(run) < 2:
            continue
        is_corner0 = sided and i0 in corners
        is_corner1 = sided and i1 in corners
        t0 = tangent_at(i0, "out" if is_corner0 else None)
        t1 = -tangent_at(i1, "in" if is_corner1 else None)
        segs.extend(_fit_arc(run, t0, t1, err_tol))

    max_segs = MAX_FIT_POINTS // 3
    if len(segs) > max_segs:
        keep = np.linspace(0, len(segs), max_segs + 1).astype(int)
        merged = []
        for k in range(max_segs):
            group = segs[keep[k]:keep[k + 1]]
            merged.append(np.array([group[0][0], group[0][1],
                                    group[-1][2], group[-1][3]]))
        segs = merged
    while len(segs) < 2:
        a, b = bezier.split(segs[0], 0.5)
        segs = [a, b]
    pts = np.concatenate([s[:3] for s in segs])
    return Path(points=pts, fill=fill, id=path_id)


# ---------------------------------------------------------------------------
# Initial SVG assembly
# ---------------------------------------------------------------------------

def build_initial_svg(matches, exemplar, components, width=None, height=None,
                      boundaries=None):
    """One initial path per target component: matched components get their
    exemplar path CPD-aligned onto the component hull; unmatched ones get a
    fresh boundary fit.  Fill is initialized to the component mean color.

    `boundaries` optionally supplies refined (e.g. subpixel) contours per
    component index; the raw crack contours are used otherwise.

    Z-order: matched paths keep the exemplar's relative order; each fitted
    path goes immediately above the matched path its component overlaps
    most (peers larger-below), or on top when nothing overlaps.
    """
    if not components:
        raise ValueError("no components to build from")
    h, w = components[0].mask.shape
    width = w if width is None else width
    height = h if height is None else height
    if boundaries is None:
        boundaries = [c.boundary for c in components]

    assigned = {j: (i, score) for (j, i, score) in matches.assignments}
    total = set(assigned) | set(matches.unmatched)
    if total != set(range(len(components))):
        raise ValueError("matches do not partition the components")

    clone_counts = {}
    for _, i, _ in matches.assignments:
        clone_counts[i] = clone_counts.get(i, 0) + 1

    matched_entries = []
    for j, i, score in sorted(matches.assignments, key=lambda a: (a[1], a[0])):
        comp = components[j]
        contour = boundaries[j]
        src_path = exemplar.paths[i]
        try:
            hull = convex_hull(smooth_closed_polyline(contour,
                                                      HULL_SMOOTH_WINDOW))
            hull_pts = resample_closed_polyline(hull, CPD_SAMPLES)
        except DegenerateHullError:
            hull_pts = resample_closed_polyline(contour, CPD_SAMPLES)
        src_pts = sample_boundary(src_path, CPD_SAMPLES)
        xf = cpd_affine(src_pts, hull_pts)
        xf = refine_affine_to_contour(
            xf, sample_boundary(src_path, 2 * CPD_SAMPLES), contour)
        new_id = src_path.id if clone_counts[i] == 1 else f"{src_path.id}@{j}"
        new_path = transform_path(src_path, xf, fill=comp.mean_color,
                                  path_id=new_id)
        matched_entries.append({
            "path": new_path, "component": j,
            "provenance": {"kind": "exemplar", "path_id": new_id,
                           "exemplar_id": src_path.id, "component": j,
                           "transform": [float(v) for v in xf.coefficients()],
                           "score": float(score),
                           "cpd_converged": bool(xf.converged)},
        })

    fitted_entries = []
    for j in sorted(matches.unmatched):
        comp = components[j]
        new_path = fit_path_to_boundary(boundaries[j], FIT_ERR_TOL,
                                        fill=comp.mean_color,
                                        path_id=f"fit{j}")
        fitted_entries.append({
            "path": new_path, "component": j,
            "provenance": {"kind": "fitted", "path_id": new_path.id,
                           "component": j},
        })

    # Insert fitted paths above their most-overlapping matched path.
    order = list(matched_entries)
    if fitted_entries:
        masks = [hard_mask(e["path"], width, height) for e in matched_entries]
        placements = []
        for e in fitted_entries:
            comp_mask = components[e["component"]].mask
            overlaps = [int((m & comp_mask).sum()) for m in masks]
            best = -1
            if overlaps and max(overlaps) > 0:
                best = int(np.argmax([o + (k * 1e-9) for k, o in
                                      enumerate(overlaps)]))
            placements.append((best, e))
        # Peers on the same anchor: larger area below (inserted first).
        for anchor, e in sorted(placements,
                                key=lambda p: (p[0], -_path_area(p[1]["path"]))):
            if anchor < 0:
                order.append(e)
            else:
                target = matched_entries[anchor]
                idx = next(i for i, o in enumerate(order) if o is target)
                # Skip over previously inserted peers to stay area-ordered.
                matched_ids = {id(o) for o in matched_entries}
                ins = idx + 1
                while ins < len(order) and id(order[ins]) not in matched_ids \
                        and _path_area(order[ins]["path"]) >= _path_area(e["path"]):
                    ins += 1
                order.insert(ins, e)

    doc = SvgDoc(width=width, height=height,
                 paths=[e["path"] for e in order])
    return InitialSvg(doc=doc, provenance=[e["provenance"] for e in order])


def _path_area(path):
    poly, _, _ = bezier.flatten(path.points, 8)
    return 0.5 * abs(np.sum(poly[:, 0] * np.roll(poly[:, 1], -1)
                            - np.roll(poly[:, 0], -1) * poly[:, 1]))
