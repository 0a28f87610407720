"""Evaluation metrics for (exemplar SVG, customized SVG, target image)
triples: control-point shape similarity, curvature-variation smoothness,
RGB reconstruction similarity, and optional embedding cosines when an
external backend is configured."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BackendError, ContractError
from .svgcore import curvature_profile

__all__ = ["MetricsReport", "hausdorff", "shape_similarity", "smoothness",
           "sim_cus", "clip_similarity", "evaluate_triple"]

DEFAULT_CURVATURE_SAMPLES = 128


@dataclass
class MetricsReport:
    sim_shape: float
    smoothness: float
    sim_cus: float
    sim_exp: float = None     # exemplar-image embedding cosine (backend only)
    sim_clip: float = None    # text embedding cosine (backend only)

    def to_json(self):
        data = {"sim_shape": self.sim_shape, "smoothness": self.smoothness,
                "sim_cus": self.sim_cus}
        if self.sim_exp is not None:
            data["sim_exp"] = self.sim_exp
        if self.sim_clip is not None:
            data["sim_clip"] = self.sim_clip
        return json.dumps(data, sort_keys=True, indent=2) + "\n"


def hausdorff(a, b):
    """Symmetric Hausdorff distance between two 2D point sets."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ContractError("hausdorff of an empty point set")
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    forward = np.sqrt(d2.min(axis=1).max())
    backward = np.sqrt(d2.min(axis=0).max())
    return float(max(forward, backward))


def _unit_points(doc):
    pts = np.concatenate([p.points for p in doc.paths])
    return pts / np.array([doc.width, doc.height])


def shape_similarity(exemplar, customized):
    """1 - Hausdorff over the union of control points of each document,
    coordinates normalized to the unit square by canvas dimensions."""
    if not exemplar.paths or not customized.paths:
        raise ContractError("documents must contain paths")
    return 1.0 - hausdorff(_unit_points(exemplar), _unit_points(customized))


def smoothness(doc, samples_per_path=DEFAULT_CURVATURE_SAMPLES):
    """Inverse curvature variation, bounded into (0, 1].

    Per path: mean absolute difference of signed curvature between cyclic
    consecutive arc-length-uniform samples, curvature measured on
    unit-normalized coordinates; smoothness = 1 / (1 + mean over paths)."""
    if samples_per_path < 16:
        raise ValueError("need samples_per_path >= 16")
    scale = np.array([doc.width, doc.height])
    variations = []
    for p in doc.paths:
        unit = p.with_points(p.points / scale)
        k = curvature_profile(unit, samples_per_path)
        variations.append(np.abs(k - np.roll(k, 1)).mean())
    v = float(np.mean(variations)) if variations else 0.0
    return 1.0 / (1.0 + v)


def sim_cus(target, rendered):
    """1 - MSE between the images in RGB space."""
    a = np.asarray(target, dtype=float)
    b = np.asarray(rendered, dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(1.0 - ((a - b) ** 2).mean())


def clip_similarity(backend, a, b_or_text):
    """Cosine similarity of backend embeddings (image-image or image-text);
    returns None when no backend is configured."""
    if backend is None:
        return None
    try:
        ea = backend.embed(a)
        eb = backend.embed(b_or_text)
    except BackendError:
        raise
    na = np.linalg.norm(ea)
    nb = np.linalg.norm(eb)
    if na == 0 or nb == 0:
        return 0.0
    return float(ea @ eb / (na * nb))


def evaluate_triple(exemplar, customized, target, rendered, backend=None,
                    exemplar_render=None, text=None):
    """Full metrics report for one customization run."""
    sim_exp = sim_clip = None
    if backend is not None and exemplar_render is not None:
        sim_exp = clip_similarity(backend, exemplar_render, rendered)
        if text is not None:
            sim_clip = clip_similarity(backend, rendered, text)
    return MetricsReport(
        sim_shape=shape_similarity(exemplar, customized),
        smoothness=smoothness(customized),
        sim_cus=sim_cus(target, rendered),
        sim_exp=sim_exp, sim_clip=sim_clip)
