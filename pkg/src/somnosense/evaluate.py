"""Evaluation protocol: rate errors, Bland-Altman agreement, chunk oversampling,
chunk-level detection metrics with ICC(1,1), and event matching.

Metrics whose denominator vanishes are reported as ``None`` (rendered as
``"undefined"`` in JSON reports), never as zero.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, MetricError, SomnoError

UNDEFINED = None


@dataclass(frozen=True)
class BlandAltmanStats:
    mean_diff: float
    sd_diff: float
    loa_low: float
    loa_high: float
    points: tuple = ()  # (mean, diff) pairs


def rr_metrics(est, gt, mape: bool = True) -> dict:
    """MAE, RMSE and MAPE (percent) of paired breathing-rate estimates."""
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape:
        raise AlignmentError("estimate and ground-truth lengths differ", code="eval-harness.alignment")
    keep = np.isfinite(est) & np.isfinite(gt)
    est, gt = est[keep], gt[keep]
    if est.size == 0:
        raise SomnoError("need at least one finite pair", code="eval-harness.empty")
    err = est - gt
    out = {"MAE": float(np.mean(np.abs(err))), "RMSE": float(math.sqrt(np.mean(err**2)))}
    if mape:
        zero = np.flatnonzero(gt == 0)
        if zero.size:
            raise MetricError(f"MAPE undefined: zero ground truth in windows {zero.tolist()}")
        out["MAPE"] = float(np.mean(np.abs(err) / np.abs(gt)) * 100.0)
    return out


def bland_altman(a, b) -> BlandAltmanStats:
    """Mean difference and 95% limits of agreement (sample SD, n - 1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AlignmentError("Bland-Altman inputs differ in length", code="eval-harness.alignment")
    if a.size < 2:
        raise SomnoError("Bland-Altman needs at least two pairs", code="eval-harness.empty")
    d = a - b
    m = float(d.mean())
    sd = float(d.std(ddof=1))
    points = tuple(zip(((a + b) / 2).tolist(), d.tolist()))
    return BlandAltmanStats(m, sd, m - 1.96 * sd, m + 1.96 * sd, points)


def chunk_windows(total_duration: float, chunk: float = 60.0, per_block: int = 20, block: float = 300.0, t0: float = 0.0):
    """Oversampled chunk boundaries: ``chunk``-second windows every ``block / per_block`` seconds.

    Starts run continuously from ``t0``; windows that would overrun the
    recording are dropped.
    """
    stride = block / per_block
    n = int(math.floor((total_duration - chunk) / stride + 1e-9)) + 1 if total_duration >= chunk else 0
    return [(t0 + i * stride, t0 + i * stride + chunk) for i in range(n)]


def _overlap(a0, a1, b0, b1):
    return max(0.0, min(a1, b1) - max(a0, b0))


def chunk_labels(events, windows, overlap_rule: float = 5.0) -> np.ndarray:
    """True for windows overlapping any event by at least ``overlap_rule`` seconds."""
    out = np.zeros(len(windows), dtype=bool)
    for i, (w0, w1) in enumerate(windows):
        out[i] = any(_overlap(w0, w1, e.start, e.end) >= overlap_rule - 1e-9 for e in events)
    return out


def icc_1_1(x, y):
    """One-way random, single-measure ICC for two ratings per target."""
    data = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
    n, k = data.shape
    if n < 2:
        return UNDEFINED
    row_mean = data.mean(axis=1)
    grand = data.mean()
    msb = k * np.sum((row_mean - grand) ** 2) / (n - 1)
    msw = np.sum((data - row_mean[:, None]) ** 2) / (n * (k - 1))
    denom = msb + (k - 1) * msw
    if denom == 0:
        return UNDEFINED
    return float((msb - msw) / denom)


def _ratio(num, den):
    return float(num / den) if den else UNDEFINED


def detection_metrics(pred, gt) -> dict:
    """Accuracy, precision, recall, F1 and ICC(1,1) of per-chunk predictions."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise AlignmentError("prediction and ground-truth lengths differ", code="eval-harness.alignment")
    if pred.size < 2:
        raise SomnoError("need at least two chunks", code="eval-harness.empty")
    tp = int(np.sum(pred & gt))
    fp = int(np.sum(pred & ~gt))
    fn = int(np.sum(~pred & gt))
    tn = int(np.sum(~pred & ~gt))
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = UNDEFINED
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "accuracy": (tp + tn) / pred.size,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "icc": icc_1_1(pred, gt),
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
    }


def interval_iou(a, b) -> float:
    inter = _overlap(a.start, a.end, b.start, b.end)
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union if union > 0 else 0.0


def event_matching(pred, gt, min_iou: float = 0.3) -> dict:
    """Greedy one-to-one matching of predicted to true events by descending IoU."""
    pairs = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            iou = interval_iou(p, g)
            if iou >= min_iou and iou > 0:
                pairs.append((iou, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p, used_g, matched = set(), set(), []
    for iou, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matched.append((i, j, iou))
    tp = len(matched)
    return {
        "TP": tp,
        "FP": len(pred) - tp,
        "FN": len(gt) - tp,
        "matched": sorted(matched),
        "precision": _ratio(tp, len(pred)),
        "recall": _ratio(tp, len(gt)),
    }


# -- reports ----------------------------------------------------------------------


def _jsonable(v):
    if v is None:
        return "undefined"
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))


def write_bland_altman_csv(stats: BlandAltmanStats, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mean", "diff"])
        for m, d in stats.points:
            w.writerow([repr(m), repr(d)])


@dataclass(frozen=True)
class RrComparison:
    """Paired per-window breathing rates (BPM)."""

    est: tuple
    gt: tuple
    window: float = 60.0
    stride: float = 15.0

    def metrics(self, mape: bool = True) -> dict:
        return rr_metrics(self.est, self.gt, mape)


@dataclass(frozen=True)
class DetectionOutcome:
    """Per-chunk predicted and true apnoea flags with the chunk boundaries."""

    pred: tuple
    gt: tuple
    windows: tuple = ()

    def metrics(self) -> dict:
        return detection_metrics(self.pred, self.gt)
