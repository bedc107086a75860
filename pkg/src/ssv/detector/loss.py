"""Sum-squared grid detection loss with analytic gradient.

The loss works on the *decoded* grid, shape ``(S, S, B*5 + C)``, where every
entry is already a sigmoid output: per box a centre offset inside its cell
(x, y), an image-relative width and height (w, h) and a confidence, then
per-cell class probabilities.

Terms, summed over cells i and box slots j::

    l_coord * sum obj_ij [(x - x^)^2 + (y - y^)^2]
    l_coord * sum obj_ij [(sqrt w - sqrt w^)^2 + (sqrt h - sqrt h^)^2]
            + sum obj_ij (C - C^)^2
    l_noobj * sum (1 - obj_ij) (C^)^2
            + sum obj_i sum_c (p(c) - p^(c))^2

obj_ij picks, in a cell holding a target, the slot whose predicted box has
the highest IoU with it (lowest slot on ties). The target confidence C is
that IoU.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .boxes import BBox

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    lambda_coord: float = 5.0
    lambda_noobj: float = 0.5
    S: int = 13
    B: int = 5
    C: int = 1

    @property
    def depth(self):
        return self.B * 5 + self.C


def assign_targets(targets, S):
    """Map each target to the cell holding its centre; one target per cell.

    A cell that receives several targets keeps the largest one.
    """
    cells = {}
    for t in targets:
        t = BBox(*t)
        col = min(max(int(t.cx * S), 0), S - 1)
        row = min(max(int(t.cy * S), 0), S - 1)
        prev = cells.get((row, col))
        if prev is not None:
            log.warning("cell (%d, %d) holds more than one target; keeping the largest", row, col)
            if prev.w * prev.h >= t.w * t.h:
                continue
        cells[(row, col)] = t
    return cells


def _iou_with_grad(p, g):
    """IoU of centre-form boxes p and g, and dIoU/dp (4,)."""
    px0, px1 = p[0] - p[2] / 2, p[0] + p[2] / 2
    py0, py1 = p[1] - p[3] / 2, p[1] + p[3] / 2
    gx0, gx1 = g[0] - g[2] / 2, g[0] + g[2] / 2
    gy0, gy1 = g[1] - g[3] / 2, g[1] + g[3] / 2
    iw = min(px1, gx1) - max(px0, gx0)
    ih = min(py1, gy1) - max(py0, gy0)
    if iw <= 0 or ih <= 0:
        return 0.0, np.zeros(4)
    inter = iw * ih
    union = p[2] * p[3] + g[2] * g[3] - inter
    # d iw / d(px0, px1): the clipped edges belong to p only when p is the inner one
    d_iw_x0 = -1.0 if px0 > gx0 else 0.0
    d_iw_x1 = 1.0 if px1 < gx1 else 0.0
    d_ih_y0 = -1.0 if py0 > gy0 else 0.0
    d_ih_y1 = 1.0 if py1 < gy1 else 0.0
    d_iw = np.array([d_iw_x0 + d_iw_x1, 0.0, (d_iw_x1 - d_iw_x0) / 2, 0.0])
    d_ih = np.array([0.0, d_ih_y0 + d_ih_y1, 0.0, (d_ih_y1 - d_ih_y0) / 2])
    d_inter = d_iw * ih + d_ih * iw
    d_area = np.array([0.0, 0.0, p[3], p[2]])
    d_union = d_area - d_inter
    grad = (d_inter * union - inter * d_union) / (union * union)
    return inter / union, grad


def yolo_loss(decoded, targets, config=LossConfig(), iou_grad=False):
    """Loss and gradient with respect to the decoded grid.

    With ``iou_grad=False`` the target confidence (the IoU) and the
    responsibility assignment are treated as constants, the usual training
    convention. ``iou_grad=True`` also differentiates through the IoU, giving
    the total derivative of the loss as a function of the grid.
    """
    S, B, C = config.S, config.B, config.C
    g = np.asarray(decoded, dtype=np.float64).reshape(S, S, config.depth)
    boxes = g[..., :B * 5].reshape(S, S, B, 5)
    probs = g[..., B * 5:]
    grad = np.zeros_like(g)
    gboxes = grad[..., :B * 5].reshape(S, S, B, 5)
    gprobs = grad[..., B * 5:]
    lc, ln = config.lambda_coord, config.lambda_noobj

    conf = boxes[..., 4]
    noobj = np.ones((S, S, B), dtype=bool)
    loss = 0.0
    for (row, col), t in assign_targets(targets, S).items():
        cell = boxes[row, col]
        pred = np.stack([(col + cell[:, 0]) / S, (row + cell[:, 1]) / S,
                         cell[:, 2], cell[:, 3]], axis=1)
        ious = [_iou_with_grad(pred[j], t) for j in range(B)]
        j = int(np.argmax([v for v, _ in ious]))
        noobj[row, col, j] = False
        x, y, w, h, c = cell[j]
        tx, ty = t.cx * S - col, t.cy * S - row
        sw, sh, stw, sth = np.sqrt(w), np.sqrt(h), np.sqrt(t.w), np.sqrt(t.h)
        target_c, d_iou = ious[j]
        loss += lc * ((x - tx) ** 2 + (y - ty) ** 2)
        loss += lc * ((sw - stw) ** 2 + (sh - sth) ** 2)
        loss += (target_c - c) ** 2
        gb = gboxes[row, col, j]
        gb[0] += 2 * lc * (x - tx)
        gb[1] += 2 * lc * (y - ty)
        gb[2] += lc * (sw - stw) / sw
        gb[3] += lc * (sh - sth) / sh
        gb[4] += 2 * (c - target_c)
        if iou_grad:
            d = 2 * (target_c - c) * d_iou  # through (C - C^)^2 with C = IoU(pred)
            gb[0] += d[0] / S
            gb[1] += d[1] / S
            gb[2] += d[2]
            gb[3] += d[3]
        p = probs[row, col]
        loss += float(np.sum((1.0 - p) ** 2))
        gprobs[row, col] += 2 * (p - 1.0)

    loss += ln * float(np.sum(conf[noobj] ** 2))
    gboxes[..., 4][noobj] += 2 * ln * conf[noobj]
    return float(loss), grad.reshape(np.shape(decoded))


def responsibility(decoded, targets, config=LossConfig()):
    """(S, S, B) indicator of responsible box slots, as used by :func:`yolo_loss`."""
    S, B = config.S, config.B
    g = np.asarray(decoded, dtype=np.float64).reshape(S, S, config.depth)
    boxes = g[..., :B * 5].reshape(S, S, B, 5)
    out = np.zeros((S, S, B), dtype=bool)
    for (row, col), t in assign_targets(targets, S).items():
        cell = boxes[row, col]
        ious = [_iou_with_grad(((col + cell[j, 0]) / S, (row + cell[j, 1]) / S,
                                cell[j, 2], cell[j, 3]), t)[0] for j in range(B)]
        out[row, col, int(np.argmax(ious))] = True
    return out
