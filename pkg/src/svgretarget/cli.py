"""Command-line pipeline: run / align / optimize / render / eval.

Stages compose through plain files (SVG, PNG, FGRD, JSON), and `run` is
exactly `align` piped into `optimize` (the initial SVG is serialized and
re-parsed in between, so the two ways of running produce byte-identical
outputs).  All outputs are deterministic for fixed inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path as FsPath

from . import __version__, match, metrics, optimize, prealign, raster, segment
from .backend import RemoteLossBackend
from .errors import BackendError, InputError, RetargetError
from .svgcore import parse_svg, serialize_svg

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STAGE = 3
EXIT_BACKEND = 4

DEFAULT_FEATURE_SIZE = 512


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

MATCH_DEFAULTS = {"tau": match.DEFAULT_TAU,
                  "color_tol": segment.DEFAULT_COLOR_TOL,
                  "min_area": None}

OPTIM_KEYS = ("iterations", "lr_points", "lr_color", "lambda_start",
              "lambda_end", "window", "render_size")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"bad config JSON in {path}: {e}") from e


def _resolve(args, config):
    """Merge config file values with CLI flags (flag wins when given)."""
    merged = {
        "exemplar": getattr(args, "exemplar", None) or config.get("exemplar_svg"),
        "target": getattr(args, "target", None) or config.get("target_image"),
        "output": getattr(args, "output", None) or config.get("output_svg"),
        "features_exemplar": getattr(args, "features_exemplar", None)
        or config.get("feature_grid_exemplar"),
        "features_target": getattr(args, "features_target", None)
        or config.get("feature_grid_target"),
        "backend": getattr(args, "backend", None) or config.get("backend"),
        "seed": getattr(args, "seed", None)
        if getattr(args, "seed", None) is not None
        else config.get("seed", 0),
        "text": getattr(args, "text", None) or config.get("text"),
    }
    mcfg = dict(MATCH_DEFAULTS)
    mcfg.update(config.get("match", {}))
    for key in ("tau", "color_tol", "min_area"):
        v = getattr(args, key, None)
        if v is not None:
            mcfg[key] = v
    merged["match"] = mcfg
    ocfg = {k: v for k, v in config.get("optim", {}).items()}
    for key in OPTIM_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            ocfg[key] = v
    merged["optim"] = ocfg
    if not (0 < mcfg["tau"] < 1):
        raise InputError(f"tau must be in (0,1), got {mcfg['tau']}")
    return merged


def _read_svg(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise InputError(f"cannot read SVG {path}: {e}") from e
    return parse_svg(text)


def _read_image(path):
    try:
        return raster.read_png(path)
    except OSError as e:
        raise InputError(f"cannot read image {path}: {e}") from e


def _make_backend(endpoint):
    return RemoteLossBackend(endpoint) if endpoint else None


def _write_text(path, text):
    FsPath(path).write_text(text, encoding="utf-8")


def _json_dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_align(exemplar_doc, target_img, mcfg, grid_e=None, grid_c=None,
                debug_sink=None):
    """segment + match + prealign; returns (InitialSvg, match info dict)."""
    flat = segment.flatten_colors(target_img, mcfg["color_tol"])
    comps = segment.connected_components(flat, mcfg["color_tol"],
                                         mcfg["min_area"])
    if not comps:
        raise RetargetError("target image has no usable components")
    h, w = comps[0].mask.shape

    if grid_e is not None:
        ew, eh = grid_e.gw * grid_e.patch, grid_e.gh * grid_e.patch
    else:
        ew = eh = DEFAULT_FEATURE_SIZE
        rendered_e, _ = raster.render(exemplar_doc, ew, eh)
        grid_e = match.builtin_descriptor_grid(rendered_e)
    labels_e = segment.exemplar_segments(exemplar_doc, ew, eh)
    feats_e, def_e = match.pool_features(grid_e, labels_e,
                                         len(exemplar_doc.paths))
    if grid_c is None:
        grid_c = match.builtin_descriptor_grid(target_img)
    labels_c = segment.components_label_map(comps, w, h)
    feats_c, def_c = match.pool_features(grid_c, labels_c, len(comps))

    sim = match.cosine_similarity_matrix(feats_e, feats_c, def_e, def_c)
    sim2 = match.dual_softmax(sim)
    matches = match.extract_matches(sim2, mcfg["tau"])
    refined = [segment.subpixel_boundary(c, target_img) for c in comps]
    initial = prealign.build_initial_svg(matches, exemplar_doc, comps, w, h,
                                         boundaries=refined)

    if debug_sink is not None:
        debug_sink["flat"] = flat
        debug_sink["labels_c"] = labels_c
        debug_sink["labels_e"] = labels_e
    info = {"components": len(comps), "paths": len(exemplar_doc.paths),
            "matched": len(matches.assignments),
            "unmatched": len(matches.unmatched)}
    return initial, info


def _load_grid(path):
    if path is None:
        return None
    try:
        return match.read_fgrd(path)
    except OSError as e:
        raise InputError(f"cannot read feature grid {path}: {e}") from e


def stage_eval(exemplar_doc, customized_doc, target_img, backend=None,
               render_size=None, text=None):
    size = render_size or DEFAULT_FEATURE_SIZE
    rendered, _ = raster.render(customized_doc, size, size)
    target = optimize._resample_target(target_img, size, (1.0, 1.0, 1.0))
    exemplar_render = None
    if backend is not None:
        exemplar_render, _ = raster.render(exemplar_doc, size, size)
    return metrics.evaluate_triple(exemplar_doc, customized_doc, target,
                                   rendered, backend=backend,
                                   exemplar_render=exemplar_render, text=text)


def _provenance_json(initial, info, seed, mcfg):
    return _json_dumps({
        "seed": seed,
        "tau": mcfg["tau"],
        "color_tol": mcfg["color_tol"],
        "min_area": mcfg["min_area"],
        "summary": info,
        "paths": initial.provenance,
    })


def _write_debug(prefix, sink, initial_doc=None, final_doc=None, size=256):
    if "flat" in sink:
        raster.write_png(f"{prefix}.debug.flat.png", sink["flat"])
    if "labels_c" in sink:
        raster.write_png(f"{prefix}.debug.components.png",
                         segment.colorize_labels(sink["labels_c"]))
    if "labels_e" in sink:
        raster.write_png(f"{prefix}.debug.exemplar_segments.png",
                         segment.colorize_labels(sink["labels_e"]))
    if initial_doc is not None:
        img, _ = raster.render(initial_doc, size, size)
        raster.write_png(f"{prefix}.debug.initial.png", img)
    if final_doc is not None:
        img, _ = raster.render(final_doc, size, size)
        raster.write_png(f"{prefix}.debug.final.png", img)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_run(args):
    config = _load_config(args.config)
    cfg = _resolve(args, config)
    for key in ("exemplar", "target", "output"):
        if not cfg[key]:
            raise InputError(f"missing required input '{key}'")
    if args.dry_run:
        plan = {"stages": ["segment", "match", "prealign", "optimize",
                           "serialize", "eval"],
                "config": {k: v for k, v in cfg.items() if k != "optim"},
                "optim": cfg["optim"]}
        sys.stdout.write(_json_dumps(plan))
        return EXIT_OK

    exemplar_doc = _read_svg(cfg["exemplar"])
    target_img = _read_image(cfg["target"])
    grid_e = _load_grid(cfg["features_exemplar"])
    grid_c = _load_grid(cfg["features_target"])
    backend = _make_backend(cfg["backend"])

    debug_sink = {} if args.debug else None
    initial, info = stage_align(exemplar_doc, target_img, cfg["match"],
                                grid_e, grid_c, debug_sink)
    # Pass the initial doc through its file representation so `run` is
    # byte-identical to `align` piped into `optimize`.
    initial_doc = parse_svg(serialize_svg(initial.doc))

    ocfg = optimize.OptimConfig(loss_backend=backend, **cfg["optim"])
    final_doc, history = optimize.optimize_paths(initial_doc, target_img, ocfg)
    out_svg = serialize_svg(final_doc)
    _write_text(cfg["output"], out_svg)

    prefix = _strip_suffix(cfg["output"])
    _write_text(f"{prefix}.provenance.json",
                _provenance_json(initial, info, cfg["seed"], cfg["match"]))
    report = stage_eval(exemplar_doc, final_doc, target_img, backend,
                        ocfg.render_size, cfg.get("text"))
    _write_text(f"{prefix}.metrics.json", report.to_json())
    if args.debug:
        _write_debug(prefix, debug_sink, initial.doc, final_doc,
                     ocfg.render_size)
        losses = [{"total": h.total, "image": h.image_term,
                   "procrustes": h.procrustes_term, "lambda": h.lam}
                  for h in history]
        _write_text(f"{prefix}.losses.json", _json_dumps(losses))
    return EXIT_OK


def _strip_suffix(path):
    p = FsPath(path)
    return str(p.with_suffix("")) if p.suffix else str(p)


def cmd_align(args):
    config = _load_config(args.config)
    cfg = _resolve(args, config)
    for key in ("exemplar", "target", "output"):
        if not cfg[key]:
            raise InputError(f"missing required input '{key}'")
    exemplar_doc = _read_svg(cfg["exemplar"])
    target_img = _read_image(cfg["target"])
    grid_e = _load_grid(cfg["features_exemplar"])
    grid_c = _load_grid(cfg["features_target"])
    debug_sink = {} if args.debug else None
    initial, info = stage_align(exemplar_doc, target_img, cfg["match"],
                                grid_e, grid_c, debug_sink)
    _write_text(cfg["output"], serialize_svg(initial.doc))
    prefix = _strip_suffix(cfg["output"])
    _write_text(f"{prefix}.provenance.json",
                _provenance_json(initial, info, cfg["seed"], cfg["match"]))
    if args.debug:
        _write_debug(prefix, debug_sink, initial.doc)
    return EXIT_OK


def cmd_optimize(args):
    config = _load_config(args.config)
    cfg = _resolve(args, config)
    if not args.initial or not cfg["target"] or not cfg["output"]:
        raise InputError("optimize needs --initial, --target, --output")
    initial_doc = _read_svg(args.initial)
    target_img = _read_image(cfg["target"])
    backend = _make_backend(cfg["backend"])
    ocfg = optimize.OptimConfig(loss_backend=backend, **cfg["optim"])
    final_doc, history = optimize.optimize_paths(initial_doc, target_img, ocfg)
    _write_text(cfg["output"], serialize_svg(final_doc))
    if args.debug:
        prefix = _strip_suffix(cfg["output"])
        losses = [{"total": h.total, "image": h.image_term,
                   "procrustes": h.procrustes_term, "lambda": h.lam}
                  for h in history]
        _write_text(f"{prefix}.losses.json", _json_dumps(losses))
    return EXIT_OK


def cmd_render(args):
    doc = _read_svg(args.svg)
    size = args.size or 512
    img, _ = raster.render(doc, size, size)
    raster.write_png(args.output, img)
    return EXIT_OK


def cmd_eval(args):
    config = _load_config(args.config)
    cfg = _resolve(args, config)
    if not cfg["exemplar"] or not args.customized or not cfg["target"]:
        raise InputError("eval needs --exemplar, --customized, --target")
    exemplar_doc = _read_svg(cfg["exemplar"])
    customized_doc = _read_svg(args.customized)
    target_img = _read_image(cfg["target"])
    backend = _make_backend(cfg["backend"])
    report = stage_eval(exemplar_doc, customized_doc, target_img, backend,
                        args.size, cfg.get("text"))
    out = report.to_json()
    if args.output:
        _write_text(args.output, out)
    else:
        sys.stdout.write(out)
    if args.csv:
        row = (f"{cfg['exemplar']},{args.customized},{cfg['target']},"
               f"{report.sim_shape},{report.smoothness},{report.sim_cus},"
               f"{'' if report.sim_exp is None else report.sim_exp},"
               f"{'' if report.sim_clip is None else report.sim_clip}\n")
        path = FsPath(args.csv)
        if not path.exists():
            path.write_text("exemplar,customized,target,sim_shape,smoothness,"
                            "sim_cus,sim_exp,sim_clip\n", encoding="utf-8")
        with open(path, "a", encoding="utf-8") as f:
            f.write(row)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--config", help="JSON config file (flags override it)")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--backend",
                     help="loss/embedding service (tcp:host:port, unix:/path)")
    sub.add_argument("--debug", action="store_true")


def _add_match_flags(sub):
    sub.add_argument("--tau", type=float, default=None,
                     help="dual-softmax match threshold (default 0.0625)")
    sub.add_argument("--color-tol", dest="color_tol", type=float, default=None)
    sub.add_argument("--min-area", dest="min_area", type=int, default=None)
    sub.add_argument("--features-exemplar", dest="features_exemplar",
                     help="FGRD feature grid for the exemplar render")
    sub.add_argument("--features-target", dest="features_target",
                     help="FGRD feature grid for the target image")


def _add_optim_flags(sub):
    sub.add_argument("--iterations", type=int, default=None)
    sub.add_argument("--lambda-start", dest="lambda_start", type=float,
                     default=None)
    sub.add_argument("--lambda-end", dest="lambda_end", type=float,
                     default=None)
    sub.add_argument("--window", type=int, default=None)
    sub.add_argument("--lr-points", dest="lr_points", type=float, default=None)
    sub.add_argument("--lr-color", dest="lr_color", type=float, default=None)
    sub.add_argument("--size", dest="render_size", type=int, default=None,
                     help="render resolution for optimization")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="svgretarget",
        description="Retarget an exemplar SVG onto a raster image.")
    ap.add_argument("--version", action="version", version=__version__)
    subs = ap.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="full pipeline")
    run.add_argument("--exemplar")
    run.add_argument("--target")
    run.add_argument("--output")
    run.add_argument("--text", help="prompt for the text-level metric")
    run.add_argument("--dry-run", dest="dry_run", action="store_true")
    _add_common(run)
    _add_match_flags(run)
    _add_optim_flags(run)
    run.set_defaults(func=cmd_run)

    al = subs.add_parser("align", help="segment + match + prealign only")
    al.add_argument("--exemplar")
    al.add_argument("--target")
    al.add_argument("--output")
    _add_common(al)
    _add_match_flags(al)
    al.set_defaults(func=cmd_align)

    op = subs.add_parser("optimize", help="optimize an initial SVG")
    op.add_argument("--initial")
    op.add_argument("--target")
    op.add_argument("--output")
    _add_common(op)
    _add_optim_flags(op)
    op.set_defaults(func=cmd_optimize)

    rn = subs.add_parser("render", help="rasterize an SVG to PNG")
    rn.add_argument("svg")
    rn.add_argument("--output", required=True)
    rn.add_argument("--size", type=int, default=512)
    rn.set_defaults(func=cmd_render)

    ev = subs.add_parser("eval", help="compute metrics for a triple")
    ev.add_argument("--exemplar")
    ev.add_argument("--customized")
    ev.add_argument("--target")
    ev.add_argument("--output")
    ev.add_argument("--csv", help="append a row to this CSV file")
    ev.add_argument("--text")
    ev.add_argument("--size", type=int, default=None)
    _add_common(ev)
    ev.set_defaults(func=cmd_eval)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"input error [{e.code}]: {e}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as e:
        print(f"backend error [{e.code}]: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except RetargetError as e:
        print(f"stage error [{e.code}]: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
