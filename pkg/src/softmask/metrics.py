"""Overlap metrics, ROC AUC, and rater-agreement matrices."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def both_empty(self) -> bool:
        return self.tp == self.fp == self.fn == 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def confusion(pred, gt) -> ConfusionCounts:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionCounts(tp, pred.size - tp - fp - fn, fp, fn)


# both-empty masks score 1.0 by convention; callers flag them via ConfusionCounts.both_empty
def dice(c: ConfusionCounts) -> float:
    if c.both_empty:
        return 1.0
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn)


def iou(c: ConfusionCounts) -> float:
    if c.both_empty:
        return 1.0
    return c.tp / (c.tp + c.fp + c.fn)


def acc(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ValueError("accuracy of an empty comparison is undefined")
    return (c.tp + c.tn) / c.total


def auc(scores, gt) -> float:
    """Mann-Whitney AUC with midranks for tied scores."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(gt, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and ground truth differ in size")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative ground-truth pixels")
    ranks = rankdata(s)  # average ranks
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, gt) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) with one point per distinct threshold, from (0,0) to (1,1)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(gt, dtype=bool).ravel()
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0, tps] / max(1, y.sum())
    fpr = np.r_[0, fps] / max(1, (~y).sum())
    return fpr, tpr


def auc_trapezoid(scores, gt) -> float:
    fpr, tpr = roc_curve(scores, gt)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


# ---------------------------------------------------------------- aggregation


def pairwise_dice(raters: dict, extra: dict | None = None) -> tuple[list[str], np.ndarray]:
    """Mean per-case Dice between every pair of named mask sets.

    Each value is a list of masks aligned over the same cases.
    """
    sets = dict(raters)
    for name, masks in (extra or {}).items():
        if name in sets:
            raise ValueError(f"duplicate mask set name {name!r}")
        sets[name] = masks
    names = list(sets)
    n_cases = {len(v) for v in sets.values()}
    if len(n_cases) > 1:
        raise ValueError(f"mask sets cover different numbers of cases: {sorted(n_cases)}")
    mat = np.eye(len(names))
    for i, a in enumerate(names):
        for j in range(i + 1, len(names)):
            b = names[j]
            vals = [dice(confusion(x, y)) for x, y in zip(sets[a], sets[b])]
            mat[i, j] = mat[j, i] = float(np.mean(vals)) if vals else float("nan")
    return names, mat


def matrix_csv(names: list[str], mat: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + names)
    for name, row in zip(names, mat):
        w.writerow([name] + [f"{v:.6f}" for v in row])
    return buf.getvalue()


@dataclass
class CaseMetrics:
    case_id: str
    dice: float
    iou: float
    acc: float
    auc: float | None
    both_empty: bool
    counts: ConfusionCounts


def evaluate_case(case_id: str, pred, gt, scores=None) -> CaseMetrics:
    c = confusion(pred, gt)
    gt_b = np.asarray(gt, dtype=bool)
    a = None
    if scores is not None and gt_b.any() and not gt_b.all():
        a = auc(scores, gt_b)
    return CaseMetrics(case_id, dice(c), iou(c), acc(c), a, c.both_empty, c)


def summarize(cases: list[CaseMetrics], pooled: bool = False) -> dict:
    """Per-case values plus macro means (or pooled-pixel Dice/IoU/ACC when ``pooled``)."""
    out = {
        "cases": [{**{k: v for k, v in asdict(c).items() if k != "counts"}, "counts": asdict(c.counts)} for c in cases],
        "n_cases": len(cases),
        "n_both_empty": sum(c.both_empty for c in cases),
        "averaging": "pooled" if pooled else "macro",
    }
    if not cases:
        return out
    if pooled:
        total = cases[0].counts
        for c in cases[1:]:
            total = total + c.counts
        agg = {"dice": dice(total), "iou": iou(total), "acc": acc(total)}
    else:
        agg = {k: float(np.mean([getattr(c, k) for c in cases])) for k in ("dice", "iou", "acc")}
    aucs = [c.auc for c in cases if c.auc is not None]
    agg["auc"] = float(np.mean(aucs)) if aucs else None
    out["aggregate"] = agg
    return out
