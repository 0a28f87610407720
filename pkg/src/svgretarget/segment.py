"""Flat-color segmentation of the target image and per-path exemplar labels.

The target image decomposes into 4-connected components of near-uniform
color; the exemplar render decomposes by painter's order into per-path
segments (top-most path owns each pixel).  `flatten_colors` is the
anti-aliasing consolidation pass the pipeline runs before flood fill: it
snaps every pixel to the nearest dominant flat color, which cuts blended
edge pixels to the side they are closest to (the 50% coverage contour),
so hulls and fitted contours land on the true region boundary instead of
an eroded or dilated one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_cc

from .raster import hard_mask

__all__ = ["Component", "LabelMap", "connected_components", "exemplar_segments",
           "flatten_colors", "components_label_map", "colorize_labels"]

DEFAULT_COLOR_TOL = 0.02          # ~5/255, tolerant of mild edge noise
DEFAULT_MIN_AREA_FRAC = 0.0005    # 0.05% of canvas pixels


@dataclass
class Component:
    id: int
    mask: np.ndarray          # (H, W) bool
    mean_color: tuple         # RGB in [0, 1]
    area: int
    centroid: tuple           # (x, y) in pixels
    boundary: np.ndarray      # (N, 2) closed outer crack contour, (x, y)


@dataclass
class LabelMap:
    width: int
    height: int
    labels: np.ndarray        # (H, W) int, -1 = background/unlabeled

    def label_counts(self, num_labels):
        """Pixel count per label index 0..num_labels-1."""
        flat = self.labels[self.labels >= 0]
        return np.bincount(flat, minlength=num_labels)[:num_labels]


def _split_channels(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 3 or img.shape[2] not in (3, 4):
        raise ValueError(f"expected (H, W, 3|4) image, got {img.shape}")
    rgb = img[:, :, :3]
    alpha = img[:, :, 3] if img.shape[2] == 4 else None
    return rgb, alpha


def _background_mask(rgb, alpha, tol):
    """Alpha == 0 where available, else a corner color key (majority of the
    4 corners within tol).  A key covering the whole image is ignored."""
    h, w = rgb.shape[:2]
    if alpha is not None:
        return alpha < 1e-6
    corners = np.array([rgb[0, 0], rgb[0, -1], rgb[-1, 0], rgb[-1, -1]])
    best_group = None
    for i in range(4):
        group = np.abs(corners - corners[i]).max(axis=1) <= tol
        if best_group is None or group.sum() > best_group.sum():
            best_group = group
    if best_group.sum() < 2:
        return np.zeros((h, w), dtype=bool)
    key = corners[best_group].mean(axis=0)
    bg = np.abs(rgb - key).max(axis=2) <= tol
    if bg.all():
        # Solid single-color image: treat as one foreground region.
        return np.zeros((h, w), dtype=bool)
    return bg


def _trace_outer_contour(mask):
    """Closed crack contour (pixel-corner polyline) of the outer boundary.

    Walks pixel edges keeping the region on the right; the ambiguous
    checkerboard case turns right, which matches 4-connectivity.  Output is
    (N, 2) float (x, y), normalized so the shoelace sum is positive.
    """
    rows, cols = np.nonzero(mask)
    r0 = rows.min()
    c0 = cols[rows == r0].min()
    h, w = mask.shape

    def fg(r, c):
        return 0 <= r < h and 0 <= c < w and mask[r, c]

    # Directions: 0=E, 1=S, 2=W, 3=N (y grows downward).
    dxy = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    x, y = c0, r0
    d = 0
    start = (x, y, d)
    pts = []
    for _ in range(4 * mask.size + 4):
        pts.append((x, y))
        x += dxy[d][0]
        y += dxy[d][1]
        # Pixels ahead-left / ahead-right of the new corner relative to d.
        if d == 0:
            fl, fr = fg(y - 1, x), fg(y, x)
        elif d == 1:
            fl, fr = fg(y, x), fg(y, x - 1)
        elif d == 2:
            fl, fr = fg(y, x - 1), fg(y - 1, x - 1)
        else:
            fl, fr = fg(y - 1, x - 1), fg(y - 1, x)
        if fr and not fl:
            pass                      # straight
        elif fl and fr:
            d = (d - 1) % 4           # left turn
        else:
            d = (d + 1) % 4           # right turn (also the diagonal case)
        if (x, y, d) == start:
            break
    poly = np.array(pts, dtype=float)
    area2 = np.sum(poly[:, 0] * np.roll(poly[:, 1], -1)
                   - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area2 < 0:
        poly = poly[::-1].copy()
    return poly


def connected_components(img, color_tol=DEFAULT_COLOR_TOL, min_area=None):
    """4-connected flat-color regions of the image, sorted by area desc.

    Adjacent pixels join iff their max-channel difference is <= color_tol
    and neither is background.  Regions smaller than min_area are merged
    into the color-nearest adjacent component (larger area breaks ties) or
    dropped when isolated.
    """
    if not (0 <= color_tol < 1):
        raise ValueError(f"color_tol must be in [0, 1), got {color_tol}")
    rgb, alpha = _split_channels(img)
    h, w = rgb.shape[:2]
    if min_area is None:
        min_area = max(1, int(round(DEFAULT_MIN_AREA_FRAC * h * w)))
    bg = _background_mask(rgb, alpha, color_tol)
    fg = ~bg
    if not fg.any():
        return []

    idx = np.arange(h * w).reshape(h, w)
    joins = []
    right = (np.abs(rgb[:, :-1] - rgb[:, 1:]).max(axis=2) <= color_tol) \
        & fg[:, :-1] & fg[:, 1:]
    joins.append((idx[:, :-1][right], idx[:, 1:][right]))
    down = (np.abs(rgb[:-1, :] - rgb[1:, :]).max(axis=2) <= color_tol) \
        & fg[:-1, :] & fg[1:, :]
    joins.append((idx[:-1, :][down], idx[1:, :][down]))
    rows_idx = np.concatenate([a for a, _ in joins])
    cols_idx = np.concatenate([b for _, b in joins])
    graph = coo_matrix((np.ones(len(rows_idx), dtype=np.int8),
                        (rows_idx, cols_idx)), shape=(h * w, h * w))
    _, labels_flat = _csgraph_cc(graph, directed=False)
    labels = labels_flat.reshape(h, w)
    labels = np.where(fg, labels, -1)

    # Compact to 0..K-1 in first-appearance order (deterministic).
    uniq, labels_c = np.unique(labels, return_inverse=True)
    labels_c = labels_c.reshape(h, w)
    if uniq[0] == -1:
        labels_c = labels_c - 1
    k = (uniq >= 0).sum()
    if k == 0:
        return []

    areas = np.bincount(labels_c[labels_c >= 0], minlength=k).astype(np.int64)
    sums = np.zeros((k, 3))
    for c in range(3):
        sums[:, c] = np.bincount(labels_c[labels_c >= 0],
                                 weights=rgb[:, :, c][labels_c >= 0], minlength=k)

    # Adjacency between distinct labels (4-neighborhood).
    pairs = set()
    a, b = labels_c[:, :-1], labels_c[:, 1:]
    m = (a != b) & (a >= 0) & (b >= 0)
    pairs.update(map(tuple, np.stack([np.minimum(a[m], b[m]),
                                      np.maximum(a[m], b[m])], axis=1).tolist()))
    a, b = labels_c[:-1, :], labels_c[1:, :]
    m = (a != b) & (a >= 0) & (b >= 0)
    pairs.update(map(tuple, np.stack([np.minimum(a[m], b[m]),
                                      np.maximum(a[m], b[m])], axis=1).tolist()))
    neighbors = {i: set() for i in range(k)}
    for i, j in pairs:
        neighbors[i].add(j)
        neighbors[j].add(i)

    # Merge undersized components, smallest first.
    parent = np.arange(k)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    alive = set(range(k))
    while True:
        small = [i for i in alive if areas[i] < min_area]
        if not small:
            break
        i = min(small, key=lambda j: (areas[j], j))
        nbrs = {find(n) for n in neighbors[i]} - {i}
        if not nbrs:
            alive.discard(i)          # isolated: dropped to background
            parent[i] = i
            areas[i] = 0
            continue
        my_color = sums[i] / max(areas[i], 1)
        target = min(nbrs, key=lambda j: (
            float(np.abs(sums[j] / max(areas[j], 1) - my_color).max()),
            -areas[j], j))
        parent[i] = target
        areas[target] += areas[i]
        sums[target] += sums[i]
        areas[i] = 0
        neighbors[target] |= {n for n in neighbors[i] if find(n) != target}
        alive.discard(i)

    roots = np.array([find(i) for i in range(k)])
    final_labels = np.where(labels_c >= 0, roots[np.maximum(labels_c, 0)], -1)
    kept = sorted(alive, key=lambda i: (-areas[i], i))
    comps = []
    for new_id, root in enumerate(kept):
        mask = final_labels == root
        area = int(mask.sum())
        if area == 0:
            continue
        ys, xs = np.nonzero(mask)
        mean = tuple(float(v) for v in rgb[mask].mean(axis=0))
        comps.append(Component(
            id=new_id, mask=mask, mean_color=mean, area=area,
            centroid=(float(xs.mean() + 0.5), float(ys.mean() + 0.5)),
            boundary=_trace_outer_contour(mask)))
    return comps


def flatten_colors(img, tol=DEFAULT_COLOR_TOL):
    """Consolidate anti-aliased edges: every locally-varying pixel inherits
    the color of its nearest locally-stable pixel.

    A pixel is stable when all its 4-neighbor max-channel differences are
    <= tol (and, for RGBA, its alpha is saturated).  Blended edge pixels
    then split at the geometric middle of the transition ramp, which for a
    symmetric anti-aliasing profile is the 50% coverage contour, so region
    masks land on the true boundary instead of an eroded or dilated one.
    RGBA alpha snaps to {0, 1}.
    """
    from scipy.ndimage import distance_transform_edt

    rgb, alpha = _split_channels(img)
    h, w = rgb.shape[:2]
    stable = np.ones((h, w), dtype=bool)
    diff_r = np.abs(rgb[:, :-1] - rgb[:, 1:]).max(axis=2) <= tol
    stable[:, :-1] &= diff_r
    stable[:, 1:] &= diff_r
    diff_d = np.abs(rgb[:-1, :] - rgb[1:, :]).max(axis=2) <= tol
    stable[:-1, :] &= diff_d
    stable[1:, :] &= diff_d
    if alpha is not None:
        stable &= (alpha > 0.99) | (alpha < 1e-6)
    if not stable.any() or stable.all():
        return np.asarray(img, dtype=float).copy()

    _, (ir, ic) = distance_transform_edt(~stable, return_indices=True)
    snapped = rgb[ir, ic]
    if alpha is None:
        return snapped
    a = alpha[ir, ic]
    a = (a >= 0.5).astype(float)
    out = np.concatenate([snapped, a[:, :, None]], axis=2)
    out[a == 0, :3] = 0.0
    return out


def subpixel_boundary(component, img, spacing=1.0, max_shift=0.75):
    """Refine a component's crack contour to subpixel accuracy using the
    anti-aliased intensities of the original image.

    For every contour sample the image is probed along the local normal
    and the point is moved to the 50% crossing of the blend fraction
    between the two side colors.  Flat arcs of the pixel contour carry a
    coherent +-0.5 px quantization phase that region masks cannot resolve;
    the blend profile does.  Low-contrast locations keep their position.
    """
    poly = np.asarray(component.boundary, dtype=float)
    n = len(poly)
    if n < 8:
        return poly.copy()
    rgb = np.asarray(img, dtype=float)
    if rgb.shape[2] == 4:
        a = rgb[:, :, 3:4]
        rgb = rgb[:, :, :3] * a + (1.0 - a)
    h, w = rgb.shape[:2]
    sm = np.ascontiguousarray(poly)
    # Light smoothing for stable tangents; positions stay the raw corners.
    tang = np.roll(sm, -2, axis=0) - np.roll(sm, 2, axis=0)
    tn = np.linalg.norm(tang, axis=1, keepdims=True)
    tang = tang / np.where(tn > 1e-12, tn, 1.0)
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    # Orient normals inward (toward the mask).
    probe = poly + 1.5 * normal
    pi = np.clip(np.round(probe[:, 1]).astype(int), 0, h - 1)
    pj = np.clip(np.round(probe[:, 0]).astype(int), 0, w - 1)
    inward_frac = component.mask[pi, pj].mean()
    if inward_frac < 0.5:
        normal = -normal

    offs = np.array([-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5])

    def bilinear(pts):
        x = np.clip(pts[:, 0] - 0.5, 0.0, w - 1.001)
        y = np.clip(pts[:, 1] - 0.5, 0.0, h - 1.001)
        x0 = x.astype(int)
        y0 = y.astype(int)
        fx = (x - x0)[:, None]
        fy = (y - y0)[:, None]
        return (rgb[y0, x0] * (1 - fx) * (1 - fy)
                + rgb[y0, x0 + 1] * fx * (1 - fy)
                + rgb[y0 + 1, x0] * (1 - fx) * fy
                + rgb[y0 + 1, x0 + 1] * fx * fy)

    samples = np.stack([bilinear(poly + d * normal) for d in offs], axis=1)
    inside_c = samples[:, -1, :]
    outside_c = samples[:, 0, :]
    axis = inside_c - outside_c
    contrast = (axis ** 2).sum(axis=1)
    frac = ((samples - outside_c[:, None, :]) * axis[:, None, :]).sum(axis=2) \
        / np.maximum(contrast, 1e-12)[:, None]
    # Walk the profile for the 0.5 crossing nearest the nominal position.
    shift = np.zeros(n)
    crossed = np.zeros(n, dtype=bool)
    for k in range(len(offs) - 1):
        lo, hi = frac[:, k], frac[:, k + 1]
        hit = ~crossed & (lo < 0.5) & (hi >= 0.5)
        denom = np.where(np.abs(hi - lo) > 1e-9, hi - lo, 1.0)
        d = offs[k] + (0.5 - lo) / denom * (offs[k + 1] - offs[k])
        better = hit & (np.abs(d) <= np.abs(np.where(crossed, shift, np.inf)))
        shift = np.where(better, d, shift)
        crossed |= hit
    ok = crossed & (contrast > 0.01)
    shift = np.clip(np.where(ok, shift, 0.0), -max_shift, max_shift)
    return poly + shift[:, None] * normal


def exemplar_segments(doc, width, height):
    """Label each pixel with the top-most path covering it (hard winding
    test at pixel centers); -1 where no path covers."""
    labels = np.full((height, width), -1, dtype=np.int64)
    scale = (width / doc.width, height / doc.height)
    for i, path in enumerate(doc.paths):
        mask = hard_mask(path, width, height, scale)
        labels[mask] = i
    return LabelMap(width=width, height=height, labels=labels)


def components_label_map(components, width, height):
    """LabelMap with each component's list index as its label."""
    labels = np.full((height, width), -1, dtype=np.int64)
    for i, comp in enumerate(components):
        labels[comp.mask] = i
    return LabelMap(width=width, height=height, labels=labels)


def colorize_labels(labelmap, seed=0):
    """Debug visualization: distinct color per label over white."""
    rng = np.random.default_rng(seed)
    nmax = int(labelmap.labels.max()) + 1
    lut = rng.uniform(0.15, 0.95, (max(nmax, 1), 3))
    out = np.ones((labelmap.height, labelmap.width, 3))
    m = labelmap.labels >= 0
    out[m] = lut[labelmap.labels[m]]
    return out
