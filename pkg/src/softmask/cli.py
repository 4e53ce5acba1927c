"""Command line entry point: ``softmask <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import labels, metrics
from .config import Config, config_from_dict, load_config
from .grabcut import RecistAnnotation
from .imaging import RawCtSlice, hu_window, load_image, load_mask, save_image
from .matting import matte, trimap_from_image
from .phantom import write_phantom_set
from .pipeline import load_manifest, run_pipeline
from .trimap import encode, trimap_from_binary, trimap_from_multirater, trimap_from_recist

log = logging.getLogger("softmask")

# (flag, config section or None, key, type)
_CONFIG_FLAGS = [
    ("--seed", None, "seed", int),
    ("--workers", None, "workers", int),
    ("--depth", None, "depth", int),
    ("--threshold", None, "threshold", float),
    ("--level", "window", "level", float),
    ("--width", "window", "width", float),
    ("--k", "grabcut", "k", int),
    ("--gamma", "grabcut", "gamma", float),
    ("--iterations", "grabcut", "iterations", int),
    ("--band", "grabcut", "band", int),
    ("--frame", "grabcut", "frame", int),
    ("--backend", "grabcut", "backend", str),
    ("--window-radius", "matting", "window_radius", int),
    ("--eps", "matting", "eps", float),
    ("--lambda-c", "matting", "lambda_c", float),
    ("--tol", "matting", "tol", float),
    ("--max-iters", "matting", "max_iters", int),
    ("--se-scale", "trimap", "se_scale", float),
    ("--se-shape", "trimap", "se_shape", str),
    ("--min-raters", "trimap", "min_raters", int),
    ("--union-min", "trimap", "union_min", int),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (overrides --config)")
    g.add_argument("--config", type=Path, help="JSON config file")
    for flag, section, key, typ in _CONFIG_FLAGS:
        where = f"{section}.{key}" if section else key
        g.add_argument(flag, dest=f"cfg_{section}_{key}", type=typ, default=None, help=f"config key {where}")


def _config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    overrides: dict = {}
    for _, section, key, _ in _CONFIG_FLAGS:
        value = getattr(args, f"cfg_{section}_{key}", None)
        if value is None:
            continue
        if section:
            overrides.setdefault(section, {})[key] = value
        else:
            overrides[key] = value
    return config_from_dict(overrides, cfg)


def _gray(path, cfg: Config) -> np.ndarray:
    img = load_image(path)
    if isinstance(img, RawCtSlice):
        return hu_window(img, cfg.window.level, cfg.window.width)
    return img


# ---------------------------------------------------------------- subcommands


def cmd_trimap(args) -> int:
    cfg = _config(args)
    tc = cfg.trimap
    if args.recist is not None:
        img = _gray(args.image, cfg)
        tri = trimap_from_recist(img, RecistAnnotation.from_flat(args.recist), cfg.grabcut_params(), tc.se_scale, tc.se_shape)
    elif args.raters:
        tri = trimap_from_multirater([load_mask(p) for p in args.raters], tc.min_raters, tc.union_min)
    else:
        tri = trimap_from_binary(load_mask(args.mask), tc.se_scale, tc.se_shape)
    save_image(encode(tri), args.out)
    return 0


def cmd_matte(args) -> int:
    cfg = _config(args)
    img = _gray(args.image, cfg)
    tri = trimap_from_image(load_image(args.trimap, ct=False))
    res = matte(img, tri, cfg.matting)
    save_image(res.alpha, args.out, cfg.depth)
    print(
        json.dumps(
            {
                "cg_iterations": res.iterations,
                "cg_residual": res.residual,
                "laplacian_ms": res.laplacian_ms,
                "solve_ms": res.solve_ms,
            }
        )
    )
    return 0


def cmd_soften(args) -> int:
    soft = load_image(args.soft, ct=False)
    out = labels.soften_binary(soft, load_mask(args.mask))
    save_image(out, args.out, args.depth)
    return 0


def cmd_binarize(args) -> int:
    save_image(labels.binarize(load_image(args.soft, ct=False), args.threshold), args.out)
    return 0


def cmd_consensus(args) -> int:
    save_image(labels.consensus([load_mask(p) for p in args.masks], args.fraction), args.out)
    return 0


def _dir_set(path: Path) -> dict[str, Path]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".pgm", ".png"))
    return {p.name: p for p in files}


def cmd_eval(args) -> int:
    status = 0
    if args.pred_dir:
        if not args.gt_dir:
            raise SystemExit("--pred-dir needs --gt-dir")
        preds, gts = _dir_set(args.pred_dir), _dir_set(args.gt_dir)
        missing = sorted(set(preds) ^ set(gts))
        if missing:
            raise SystemExit(f"prediction and ground-truth directories disagree on: {', '.join(missing)}")
        cases = []
        for name in preds:
            scores = load_image(preds[name], ct=False)
            gt = load_mask(gts[name])
            cases.append(metrics.evaluate_case(name, labels.binarize(scores, args.threshold), gt, scores))
        report = metrics.summarize(cases, pooled=args.pooled)
        report["threshold"] = args.threshold
        text = json.dumps(report, indent=2, sort_keys=True)
        if args.report:
            args.report.write_text(text + "\n")
        else:
            print(text)
    if args.rater:
        sets: dict[str, list] = {}
        case_names = None
        for item in args.rater:
            name, _, d = item.partition("=")
            if not d:
                raise SystemExit(f"--rater expects NAME=DIR, got {item!r}")
            files = _dir_set(Path(d))
            if case_names is None:
                case_names = list(files)
            elif list(files) != case_names:
                raise SystemExit(f"rater {name!r} covers a different case list")
            sets[name] = [load_mask(p) for p in files.values()]
        extra = {}
        if args.consensus_fraction:
            per_case = list(zip(*sets.values()))
            extra[f"{int(round(args.consensus_fraction * 100))}% consensus"] = [
                labels.consensus(ms, args.consensus_fraction) for ms in per_case
            ]
        for item in args.extra or []:
            name, _, d = item.partition("=")
            files = _dir_set(Path(d))
            if list(files) != case_names:
                raise SystemExit(f"extra set {name!r} covers a different case list")
            extra[name] = [load_mask(p) for p in files.values()]
        names, mat = metrics.pairwise_dice(sets, extra)
        text = metrics.matrix_csv(names, mat)
        if args.matrix:
            args.matrix.write_text(text)
        else:
            sys.stdout.write(text)
    if not args.pred_dir and not args.rater:
        raise SystemExit("eval needs --pred-dir/--gt-dir and/or --rater")
    return status


def cmd_run(args) -> int:
    cfg = _config(args)
    entries = load_manifest(args.manifest)
    summary = run_pipeline(entries, cfg, args.out)
    print(
        f"processed {summary['processed']}: {summary['succeeded']} succeeded, {summary['failed']} failed",
        file=sys.stderr,
    )
    return 0 if summary["failed"] == 0 else 1


def cmd_phantom(args) -> int:
    manifest = write_phantom_set(
        args.out, args.count, args.size, args.seed, args.noise, args.kind, args.raw16
    )
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softmask", description="Soft lesion masks from weak annotations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trimap", help="build a trimap with one strategy")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--recist", type=float, nargs=8, metavar="C", help="long x0 y0 x1 y1 short x0 y0 x1 y1")
    src.add_argument("--raters", type=Path, nargs="+", help="rater mask files")
    src.add_argument("--mask", type=Path, help="single binary mask")
    p.add_argument("--image", type=Path, help="image (needed for --recist)")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_trimap)

    p = sub.add_parser("matte", help="closed-form matting of an image under a trimap")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--trimap", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_matte)

    p = sub.add_parser("soften", help="pixelwise max of a soft mask and a binary mask")
    p.add_argument("--soft", type=Path, required=True)
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--depth", type=int, default=8, choices=(8, 16))
    p.set_defaults(func=cmd_soften)

    p = sub.add_parser("binarize", help="threshold a soft mask")
    p.add_argument("--soft", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=labels.DEFAULT_THRESHOLD)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_binarize)

    p = sub.add_parser("consensus", help="pixels marked by at least a fraction of raters")
    p.add_argument("--masks", type=Path, nargs="+", required=True)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("eval", help="Dice/IoU/ACC/AUC report and pairwise Dice matrix")
    p.add_argument("--pred-dir", type=Path, help="predicted (soft or binary) masks")
    p.add_argument("--gt-dir", type=Path, help="ground-truth masks, same file names")
    p.add_argument("--threshold", type=float, default=labels.DEFAULT_THRESHOLD)
    p.add_argument("--pooled", action="store_true", help="pool pixels across cases instead of averaging")
    p.add_argument("--report", type=Path, help="JSON report path (default stdout)")
    p.add_argument("--rater", action="append", metavar="NAME=DIR", help="rater mask directory")
    p.add_argument("--extra", action="append", metavar="NAME=DIR", help="additional mask set for the matrix")
    p.add_argument("--consensus-fraction", type=float, help="add a consensus row built from the raters")
    p.add_argument("--matrix", type=Path, help="CSV path for the pairwise matrix (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="label every case of a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("phantom", help="write synthetic phantoms and a manifest")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--kind", choices=("recist", "multirater", "binary"), default="recist")
    p.add_argument("--raw16", action="store_true", help="store images as 16-bit CT values")
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "trimap" and args.recist is not None and args.image is None:
        parser.error("--recist needs --image")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
