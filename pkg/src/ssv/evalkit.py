"""Discrete detection evaluation: TP/FP labelling at IoU > 0.5 and ROC curves."""

from __future__ import annotations

import csv
import io
from typing import NamedTuple

import numpy as np

from .detector.boxes import BBox, iou_matrix
from .pnm import write_atomic

IOU_MATCH = 0.5
THRESHOLDS = tuple(np.round(np.linspace(0.0, 1.0, 101), 2).tolist())
FP_BUDGETS = (10, 50, 100)


class MatchResult(NamedTuple):
    labels: tuple  # True for TP, per detection in input order
    matched: frozenset  # indices of ground-truth boxes claimed by a TP

    @property
    def tp(self):
        return sum(self.labels)

    @property
    def fp(self):
        return len(self.labels) - self.tp


class RocPoint(NamedTuple):
    threshold: float
    fp_total: int
    tp_rate: float


def _score(d):
    if hasattr(d, "score"):
        return float(d.score)
    return float(d[1])


def _box(d):
    return BBox(*(d.box if hasattr(d, "box") else d[0]))


def match_detections(dets, gts) -> MatchResult:
    """Greedy matching in descending score order.

    Each detection takes the unmatched ground truth it overlaps most and is a
    TP iff that IoU exceeds 0.5. ``dets`` hold Detection objects or
    ``(box, score)`` pairs; equal scores keep their input order.
    """
    n = len(dets)
    labels = [False] * n
    matched = set()
    if n == 0:
        return MatchResult((), frozenset())
    if gts:
        ious = iou_matrix([_box(d) for d in dets], [BBox(*g) for g in gts])
        order = sorted(range(n), key=lambda i: -_score(dets[i]))
        for i in order:
            free = [k for k in range(len(gts)) if k not in matched]
            if not free:
                break
            best = max(free, key=lambda k: (ious[i, k], -k))
            if ious[i, best] > IOU_MATCH:
                matched.add(best)
                labels[i] = True
    return MatchResult(tuple(labels), frozenset(matched))


def roc_curve(per_image_dets, per_image_gts, thresholds=THRESHOLDS):
    """One RocPoint per threshold; detections with score >= threshold count."""
    if len(per_image_dets) != len(per_image_gts):
        raise ValueError("detections and ground truth cover different image counts")
    total_gt = sum(len(g) for g in per_image_gts)
    points = []
    for t in thresholds:
        fp = tp = 0
        for dets, gts in zip(per_image_dets, per_image_gts):
            m = match_detections([d for d in dets if _score(d) >= t], gts)
            tp += m.tp
            fp += m.fp
        points.append(RocPoint(float(t), fp, tp / total_gt if total_gt else 0.0))
    return points


def tp_rate_at_fp(curve, budget):
    """Best TP rate among curve points with at most ``budget`` false positives."""
    rates = [p.tp_rate for p in curve if p.fp_total <= budget]
    return max(rates, default=0.0)


def roc_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("threshold", "fp_total", "tp_rate"))
    for p in curve:
        w.writerow((f"{p.threshold:.2f}", p.fp_total, f"{p.tp_rate:.6f}"))
    return buf.getvalue()


def write_roc(path, curve):
    write_atomic(path, roc_csv(curve).encode())


def read_roc(path):
    with open(path, newline="") as fh:
        return [RocPoint(float(r["threshold"]), int(r["fp_total"]), float(r["tp_rate"]))
                for r in csv.DictReader(fh)]


def summary(curve, budgets=FP_BUDGETS) -> str:
    return "  ".join(f"TP@FP<={b}: {tp_rate_at_fp(curve, b):.3f}" for b in budgets)
