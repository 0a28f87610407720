"""Dual semantic matching between exemplar paths and target components.

Region features are pooled from a dense per-patch feature grid (externally
supplied via the FGRD container, or the builtin color+position descriptor),
compared by cosine similarity, sharpened with a dual softmax (row-softmax
times column-softmax), and thresholded column-wise into matches.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

__all__ = ["FeatureGrid", "MatchSet", "read_fgrd", "write_fgrd",
           "pool_features", "cosine_similarity_matrix", "dual_softmax",
           "extract_matches", "builtin_descriptor_grid", "DEFAULT_TAU"]

DEFAULT_TAU = 0.0625
FGRD_MAGIC = b"FGRD"


@dataclass
class FeatureGrid:
    gh: int
    gw: int
    channels: int
    patch: int
    data: np.ndarray          # (gh, gw, C) float32

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.shape != (self.gh, self.gw, self.channels):
            raise ValueError(f"grid data shape {self.data.shape} != "
                             f"{(self.gh, self.gw, self.channels)}")


@dataclass
class MatchSet:
    """Column-wise assignments (component -> path) plus unmatched components.

    Every component index appears exactly once across assignments and
    unmatched; a path may serve several components.
    """
    assignments: list = field(default_factory=list)   # (comp j, path i, score)
    unmatched: list = field(default_factory=list)     # component indices


# ---------------------------------------------------------------------------
# FGRD container (normative binary layout for bridge interop)
# ---------------------------------------------------------------------------

def write_fgrd(fp, grid):
    """magic 'FGRD', u32le [version=1, gh, gw, C, patch, dtype=0], then
    gh*gw*C float32le values, row-major (row, col, channel)."""
    close = False
    if isinstance(fp, (str, bytes)) or hasattr(fp, "__fspath__"):
        fp = open(fp, "wb")
        close = True
    try:
        fp.write(FGRD_MAGIC)
        fp.write(struct.pack("<6I", 1, grid.gh, grid.gw, grid.channels,
                             grid.patch, 0))
        fp.write(np.ascontiguousarray(grid.data, dtype="<f4").tobytes())
    finally:
        if close:
            fp.close()


def read_fgrd(fp):
    close = False
    if isinstance(fp, (str, bytes)) or hasattr(fp, "__fspath__"):
        fp = open(fp, "rb")
        close = True
    try:
        magic = fp.read(4)
        if magic != FGRD_MAGIC:
            raise ContractError(f"not an FGRD file (magic {magic!r})")
        version, gh, gw, c, patch, dtype = struct.unpack("<6I", fp.read(24))
        if version != 1:
            raise ContractError(f"unsupported FGRD version {version}")
        if dtype != 0:
            raise ContractError(f"unsupported FGRD dtype {dtype}")
        raw = fp.read(gh * gw * c * 4)
        if len(raw) != gh * gw * c * 4:
            raise ContractError("truncated FGRD payload")
        data = np.frombuffer(raw, dtype="<f4").reshape(gh, gw, c)
        return FeatureGrid(gh=gh, gw=gw, channels=c, patch=patch,
                           data=data.copy())
    finally:
        if close:
            fp.close()


# ---------------------------------------------------------------------------
# Pooling and similarity
# ---------------------------------------------------------------------------

def pool_features(grid, labels, num_labels):
    """Mean grid feature per label after majority-vote downsampling.

    The label map is reduced to grid resolution by majority vote per cell
    (background votes count; ties prefer background, then the lowest
    label).  Returns (features (num_labels, C), defined mask); labels that
    own no cell are flagged undefined rather than raising.
    """
    gh, gw, patch = grid.gh, grid.gw, grid.patch
    lab = labels.labels
    h, w = lab.shape
    if not (gh * patch >= h and (gh - 1) * patch < h + patch
            and gw * patch >= w and (gw - 1) * patch < w + patch):
        raise ContractError(
            f"label map {w}x{h} does not cover grid {gw}x{gh} @ patch {patch}")
    padded = np.full((gh * patch, gw * patch), -1, dtype=np.int64)
    padded[:h, :w] = lab
    cells = padded.reshape(gh, patch, gw, patch).transpose(0, 2, 1, 3)
    cells = cells.reshape(gh, gw, patch * patch) + 1      # bg -> 0
    cell_label = np.zeros((gh, gw), dtype=np.int64)
    for gy in range(gh):
        for gx in range(gw):
            cell_label[gy, gx] = np.argmax(np.bincount(cells[gy, gx]))
    cell_label = cell_label - 1                            # back to -1 = bg
    feats = np.zeros((num_labels, grid.channels))
    defined = np.zeros(num_labels, dtype=bool)
    flat_lab = cell_label.ravel()
    flat_feat = grid.data.reshape(-1, grid.channels).astype(float)
    for lbl in range(num_labels):
        sel = flat_lab == lbl
        if sel.any():
            feats[lbl] = flat_feat[sel].mean(axis=0)
            defined[lbl] = True
    return feats, defined


def cosine_similarity_matrix(path_feats, comp_feats,
                             path_defined=None, comp_defined=None):
    """Pairwise cosine similarity; undefined rows/columns are filled with -1
    and zero-norm vectors compare as 0 against everything."""
    a = np.asarray(path_feats, dtype=float)
    b = np.asarray(comp_feats, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ContractError(
            f"feature dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.outer(np.where(na > 0, na, 1.0), np.where(nb > 0, nb, 1.0))
    sim = (a @ b.T) / denom
    sim[na == 0, :] = 0.0
    sim[:, nb == 0] = 0.0
    if path_defined is not None:
        sim[~np.asarray(path_defined, dtype=bool), :] = -1.0
    if comp_defined is not None:
        sim[:, ~np.asarray(comp_defined, dtype=bool)] = -1.0
    return sim


def dual_softmax(sim):
    """Element-wise product of the row-wise and column-wise softmax."""
    s = np.asarray(sim, dtype=float)
    if not np.isfinite(s).all():
        raise ContractError("similarity matrix contains non-finite entries")
    er = np.exp(s - s.max(axis=1, keepdims=True))
    row = er / er.sum(axis=1, keepdims=True)
    ec = np.exp(s - s.max(axis=0, keepdims=True))
    col = ec / ec.sum(axis=0, keepdims=True)
    return row * col


def extract_matches(sim2, tau=DEFAULT_TAU):
    """Column argmax with a strict threshold.

    Component j is assigned to path argmax_i Sim2(i, j) iff that score
    strictly exceeds tau (ties break to the lowest path index); otherwise
    j is unmatched.
    """
    if not (0 < tau < 1):
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    s = np.asarray(sim2, dtype=float)
    result = MatchSet()
    for j in range(s.shape[1]):
        i = int(np.argmax(s[:, j]))
        score = float(s[i, j])
        if score > tau:
            result.assignments.append((j, i, score))
        else:
            result.unmatched.append(j)
    return result


# ---------------------------------------------------------------------------
# Builtin descriptor (non-neural fallback)
# ---------------------------------------------------------------------------

_SRGB_TO_XYZ = np.array([[0.4124564, 0.3575761, 0.1804375],
                         [0.2126729, 0.7151522, 0.0721750],
                         [0.0193339, 0.1191920, 0.9503041]])
_D65 = np.array([0.95047, 1.0, 1.08883])

COLOR_WEIGHT = 1.0
POSITION_WEIGHT = 0.25


def _rgb_to_lab(rgb):
    """sRGB in [0,1] -> CIELAB, affinely scaled to roughly [-1, 1] per
    channel with mid-gray at the origin (signed channels spread region
    descriptors angularly, which the cosine comparison needs)."""
    c = np.asarray(rgb, dtype=float)
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / _D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz),
                 xyz / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.stack([116.0 * f[..., 1] - 16.0,
                    500.0 * (f[..., 0] - f[..., 1]),
                    200.0 * (f[..., 1] - f[..., 2])], axis=-1)
    return (lab - np.array([50.0, 0.0, 0.0])) / np.array([50.0, 110.0, 110.0])


def builtin_descriptor_grid(img, patch=8):
    """5-channel per-cell descriptor: perceptual mean color (3, weight 1.0)
    plus normalized cell-center position (2, weight 0.25)."""
    if patch < 4:
        raise ValueError(f"patch must be >= 4, got {patch}")
    img = np.asarray(img, dtype=float)
    h, w = img.shape[:2]
    rgb = img[:, :, :3]
    if img.shape[2] == 4:
        a = img[:, :, 3:4]
        rgb = rgb * a + (1.0 - a)      # composite over white
    gh = -(-h // patch)
    gw = -(-w // patch)
    data = np.zeros((gh, gw, 5), dtype=np.float32)
    for gy in range(gh):
        for gx in range(gw):
            cell = rgb[gy * patch:(gy + 1) * patch, gx * patch:(gx + 1) * patch]
            lab = _rgb_to_lab(cell.reshape(-1, 3).mean(axis=0))
            data[gy, gx, :3] = COLOR_WEIGHT * lab
            data[gy, gx, 3] = POSITION_WEIGHT * ((gx + 0.5) * patch / w)
            data[gy, gx, 4] = POSITION_WEIGHT * ((gy + 0.5) * patch / h)
    return FeatureGrid(gh=gh, gw=gw, channels=5, patch=patch, data=data)
