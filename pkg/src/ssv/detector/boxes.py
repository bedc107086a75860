"""Boxes, intersection-over-union and non-maximum suppression."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class BBox(NamedTuple):
    """Centre-form box; coordinates are image-relative."""

    cx: float
    cy: float
    w: float
    h: float

    def corners(self):
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    @classmethod
    def from_corner(cls, x, y, w, h):
        """From top-left corner plus size."""
        return cls(x + w / 2, y + h / 2, w, h)


class Detection(NamedTuple):
    box: BBox
    confidence: float
    class_prob: float
    index: int = 0  # cell * B + box slot, for stable ordering

    @property
    def score(self):
        return self.confidence * self.class_prob


def iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = BBox(*a).corners()
    bx0, by0, bx1, by1 = BBox(*b).corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from the same corners as the intersection, so a == b gives exactly 1
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return min(inter / union, 1.0) if union > 0 else 0.0


def iou_matrix(A, B):
    """Pairwise IoU of (n, 4) and (m, 4) centre-form box arrays."""
    A = np.asarray(A, dtype=np.float64).reshape(-1, 4)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 4)
    a0 = A[:, None, :2] - A[:, None, 2:] / 2
    a1 = A[:, None, :2] + A[:, None, 2:] / 2
    b0 = B[None, :, :2] - B[None, :, 2:] / 2
    b1 = B[None, :, :2] + B[None, :, 2:] / 2
    wh = np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = np.prod(a1 - a0, axis=-1)
    area_b = np.prod(b1 - b0, axis=-1)
    union = area_a + area_b - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, np.minimum(inter / union, 1.0), 0.0)
    return out


def sort_detections(dets):
    return sorted(dets, key=lambda d: (-d.score, d.index))


def nms(dets, iou_threshold=0.4):
    """Greedy suppression: keep a detection iff its IoU with every kept one is <= threshold."""
    ordered = sort_detections(dets)
    if not ordered:
        return []
    boxes = np.array([d.box for d in ordered], dtype=np.float64)
    ious = iou_matrix(boxes, boxes)
    keep = []
    for i in range(len(ordered)):
        if all(ious[i, k] <= iou_threshold for k in keep):
            keep.append(i)
    return [ordered[i] for i in keep]
