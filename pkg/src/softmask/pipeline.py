"""Manifest-driven soft-mask labelling.

A manifest is JSON lines, one case per line::

    {"case_id": "c1", "image": "c1.pgm", "recist": [x0, y0, x1, y1, x2, y2, x3, y3]}
    {"case_id": "c2", "image": "c2.pgm", "multirater": ["r1.pgm", "r2.pgm"], "ground_truth": "gt.pgm"}
    {"case_id": "c3", "image": "c3.pgm", "binary": "m.pgm", "window": [-600, 1500]}

Exactly one of ``recist`` / ``multirater`` / ``binary`` per line.  Relative
paths resolve against the manifest's directory.  Each case writes
``<out>/<case_id>/{soft_mask.pgm, trimap.pgm, report.json}``.
"""
from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .config import Config
from .grabcut import RecistAnnotation
from .imaging import RawCtSlice, hu_window, load_image, load_mask, save_image
from .labels import binarize
from .matting import BACKGROUND, FOREGROUND, matte
from .trimap import encode, trimap_from_binary, trimap_from_multirater, trimap_from_recist, unknown_fraction

log = logging.getLogger(__name__)

KINDS = ("recist", "multirater", "binary")
_KEYS = {"case_id", "image", "ground_truth", "window", *KINDS}


class ManifestError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"manifest line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class ManifestEntry:
    case_id: str
    image: Path
    kind: str
    recist: RecistAnnotation | None = None
    masks: tuple[Path, ...] = ()
    ground_truth: Path | None = None
    window: tuple[float, float] | None = None


def _parse_entry(obj, base: Path, lineno: int) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise ManifestError(lineno, "entry must be a JSON object")
    unknown = set(obj) - _KEYS
    if unknown:
        raise ManifestError(lineno, f"unknown field(s): {', '.join(sorted(unknown))}")
    for key in ("case_id", "image"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise ManifestError(lineno, f"missing or invalid {key!r}")
    kinds = [k for k in KINDS if k in obj]
    if len(kinds) != 1:
        raise ManifestError(lineno, f"need exactly one annotation kind of {KINDS}, got {kinds or 'none'}")
    kind = kinds[0]
    case_id = obj["case_id"]
    if "/" in case_id or case_id in (".", ".."):
        raise ManifestError(lineno, f"case_id {case_id!r} is not a valid directory name")

    recist, masks = None, ()
    try:
        if kind == "recist":
            recist = RecistAnnotation.from_flat(obj["recist"])
        elif kind == "multirater":
            paths = obj["multirater"]
            if not isinstance(paths, list) or len(paths) < 2 or not all(isinstance(p, str) for p in paths):
                raise ValueError("multirater needs a list of at least two mask paths")
            masks = tuple(base / p for p in paths)
        else:
            if not isinstance(obj["binary"], str):
                raise ValueError("binary must be a mask path")
            masks = (base / obj["binary"],)
        window = obj.get("window")
        if window is not None:
            if not (isinstance(window, list) and len(window) == 2):
                raise ValueError("window must be [level, width]")
            window = (float(window[0]), float(window[1]))
            if window[1] <= 0:
                raise ValueError("window width must be positive")
    except (TypeError, ValueError) as exc:
        raise ManifestError(lineno, str(exc)) from None
    gt = obj.get("ground_truth")
    if gt is not None and not isinstance(gt, str):
        raise ManifestError(lineno, "ground_truth must be a path")
    return ManifestEntry(
        case_id,
        base / obj["image"],
        kind,
        recist,
        masks,
        base / gt if gt else None,
        window,
    )


def load_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(lineno, f"invalid JSON ({exc.msg})") from None
            entry = _parse_entry(obj, base, lineno)
            if entry.case_id in seen:
                raise ManifestError(lineno, f"duplicate case_id {entry.case_id!r} (first on line {seen[entry.case_id]})")
            seen[entry.case_id] = lineno
            entries.append(entry)
    return entries


def entry_to_json(entry: ManifestEntry, base: Path) -> str:
    def rel(p: Path) -> str:
        return os.path.relpath(p, base)

    obj: dict = {"case_id": entry.case_id, "image": rel(entry.image)}
    if entry.kind == "recist":
        obj["recist"] = entry.recist.flat()
    elif entry.kind == "multirater":
        obj["multirater"] = [rel(p) for p in entry.masks]
    else:
        obj["binary"] = rel(entry.masks[0])
    if entry.ground_truth is not None:
        obj["ground_truth"] = rel(entry.ground_truth)
    if entry.window is not None:
        obj["window"] = list(entry.window)
    return json.dumps(obj)


# ---------------------------------------------------------------- per case


@dataclass
class QualityReport:
    case_id: str
    strategy: str
    unknown_fraction: float
    fg_deviation: float  # max over foreground pixels of 1 - alpha
    bg_deviation: float  # max over background pixels of alpha
    cg_iterations: int
    cg_residual: float
    trimap_ms: float
    matting_ms: float
    metrics: dict | None = None

    TIMING_FIELDS = ("trimap_ms", "matting_ms")

    def to_dict(self) -> dict:
        return asdict(self)


def load_gray(path, window: tuple[float, float]) -> np.ndarray:
    img = load_image(path)
    if isinstance(img, RawCtSlice):
        return hu_window(img, *window)
    return img


def make_trimap(entry: ManifestEntry, img: np.ndarray, config: Config):
    tc = config.trimap
    if entry.kind == "recist":
        return trimap_from_recist(img, entry.recist, config.grabcut_params(), tc.se_scale, tc.se_shape)
    masks = [load_mask(p) for p in entry.masks]
    for p, m in zip(entry.masks, masks):
        if m.shape != img.shape:
            raise ValueError(f"mask {p} has shape {m.shape}, image has {img.shape}")
    if entry.kind == "multirater":
        return trimap_from_multirater(masks, tc.min_raters, tc.union_min)
    return trimap_from_binary(masks[0], tc.se_scale, tc.se_shape)


def label_case(entry: ManifestEntry, config: Config):
    """Run one case in memory; returns (soft mask, trimap, QualityReport)."""
    window = entry.window or (config.window.level, config.window.width)
    img = load_gray(entry.image, window)
    t0 = time.perf_counter()
    tri = make_trimap(entry, img, config)
    trimap_ms = (time.perf_counter() - t0) * 1e3
    res = matte(img, tri, config.matting)
    alpha = res.alpha
    fg, bg = tri == FOREGROUND, tri == BACKGROUND
    report = QualityReport(
        entry.case_id,
        entry.kind,
        unknown_fraction(tri),
        float(np.max(1.0 - alpha[fg])),
        float(np.max(alpha[bg])),
        res.iterations,
        res.residual,
        trimap_ms,
        res.total_ms,
    )
    if entry.ground_truth is not None:
        gt = load_mask(entry.ground_truth)
        cm = metrics.evaluate_case(entry.case_id, binarize(alpha, config.threshold), gt, alpha)
        report.metrics = {
            "threshold": config.threshold,
            "dice": cm.dice,
            "iou": cm.iou,
            "acc": cm.acc,
            "auc": cm.auc,
            "both_empty": cm.both_empty,
        }
    return alpha, tri, report


def _write_case(out_dir: Path, case_id: str, alpha, tri, report: QualityReport, depth: int) -> Path:
    tmp = Path(tempfile.mkdtemp(dir=out_dir, prefix=f".{case_id}."))
    try:
        save_image(alpha, tmp / "soft_mask.pgm", depth)
        save_image(encode(tri), tmp / "trimap.pgm", 8)
        (tmp / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        final = out_dir / case_id
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
        return final
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def process_case(entry: ManifestEntry, config: Config, out_dir) -> dict:
    """Label and write one case; never raises, failures come back in the result."""
    out_dir = Path(out_dir)
    try:
        alpha, tri, report = label_case(entry, config)
        _write_case(out_dir, entry.case_id, alpha, tri, report, config.depth)
        return {"case_id": entry.case_id, "ok": True, "report": report.to_dict()}
    except Exception as exc:  # isolate per-case failures from the batch
        log.debug("case %s failed\n%s", entry.case_id, traceback.format_exc())
        return {"case_id": entry.case_id, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _run_one(args):
    return process_case(*args)


def run_pipeline(entries, config: Config, out_dir, workers: int | None = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = workers or config.workers
    jobs = [(e, config, out_dir) for e in entries]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    ok = [r for r in results if r["ok"]]
    failed = [{"case_id": r["case_id"], "error": r["error"]} for r in results if not r["ok"]]
    for f in failed:
        log.warning("case %s failed: %s", f["case_id"], f["error"])
    summary = {
        "processed": len(results),
        "succeeded": len(ok),
        "failed": len(failed),
        "failures": failed,
        "config": config.to_dict(),
    }
    if ok:
        summary["timings_ms"] = {
            k: float(np.mean([r["report"][k] for r in ok])) for k in QualityReport.TIMING_FIELDS
        }
        dices = [r["report"]["metrics"]["dice"] for r in ok if r["report"].get("metrics")]
        if dices:
            summary["mean_dice"] = float(np.mean(dices))
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
