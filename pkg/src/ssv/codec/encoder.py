"""Picture coding: quadtree partitioning, intra coding and full decoding."""

from __future__ import annotations

import numpy as np

from .._util import check_luma, round_half_away
from ..scramble import ScrambleKey, plan_for, scramble_tu, unscramble_tu
from . import stages
from .bitstream import Bitstream
from .entropy import CTU, MIN_CU, CodingUnit, ctu_origins, entropy_decode, entropy_encode
from .intra import gather_refs, intra_predict, predict_all
from .transform import (dequantize, forward_transform, from_zigzag, inverse_transform,
                        qstep, quantize, to_zigzag)


def pad_image(image):
    """Edge-replicate a luma image up to multiples of the CTU size."""
    a = check_luma(image)
    h, w = a.shape
    ph, pw = -h % CTU, -w % CTU
    if ph or pw:
        a = np.pad(a, ((0, ph), (0, pw)), mode="edge")
    return a


def split_threshold(qp):
    """Per-pixel SAD above which a block is split: half the quantiser step."""
    return 0.5 * qstep(qp)


def reconstruct_block(pred, qscan, qp, size):
    """Prediction plus dequantised, inverse-transformed residual, clipped to 8 bits."""
    stages.tick("reconstruction")
    if not np.any(qscan):
        return np.asarray(pred, dtype=np.int64)
    stages.tick("dequantize")
    coeffs = dequantize(from_zigzag(qscan, size), qp)
    stages.tick("inverse_transform")
    resid = inverse_transform(coeffs)
    return np.clip(round_half_away(pred + resid), 0, 255)


class _PictureCoder:
    def __init__(self, image, qp):
        self.orig = image.astype(np.int64)
        self.qp = qp
        self.threshold = split_threshold(qp)
        self.recon = np.zeros_like(self.orig)
        self.avail = np.zeros(image.shape, dtype=bool)
        self.leaves = []

    def code_node(self, x, y, size):
        refs = gather_refs(self.recon, self.avail, x, y, size)
        preds = predict_all(refs, size)
        block = self.orig[y:y + size, x:x + size]
        sad = np.abs(preds - block).sum(axis=(1, 2))
        mode = int(np.argmin(sad))  # first minimum: smallest mode wins ties
        if size > MIN_CU and sad[mode] / (size * size) > self.threshold:
            h = size // 2
            for dy in (0, h):
                for dx in (0, h):
                    self.code_node(x + dx, y + dy, h)
            return
        pred = preds[mode]
        q = to_zigzag(quantize(forward_transform(block - pred), self.qp))
        self.recon[y:y + size, x:x + size] = reconstruct_block(pred, q, self.qp, size)
        self.avail[y:y + size, x:x + size] = True
        self.leaves.append(CodingUnit(x, y, size, mode, q))


def partition(image, qp):
    """Code the picture and return its leaves in coding order.

    Split decisions use decoded neighbours, so partitioning and coding are
    one pass; the returned leaves carry their (unscrambled) coefficients.
    """
    leaves, _ = code_picture(image, qp)
    return leaves


def code_picture(image, qp):
    """Return ``(leaves, reconstruction)`` for a padded luma picture."""
    img = pad_image(image)
    qstep(qp)  # validates qp
    coder = _PictureCoder(img, qp)
    for x, y in ctu_origins(img.shape[1], img.shape[0]):
        coder.code_node(x, y, CTU)
    return coder.leaves, coder.recon.astype(np.uint8)


def scramble_leaves(leaves, key: ScrambleKey):
    return [CodingUnit(cu.x, cu.y, cu.size, cu.ipm,
                       scramble_tu(cu.qcoeffs, plan_for(key, cu.x, cu.y, cu.size * cu.size)))
            for cu in leaves]


def bitstream_from_leaves(leaves, width, height, qp, key=None, entropy_mode="adaptive"):
    """Entropy-code already partitioned leaves, scrambling them first if keyed."""
    if key is not None:
        leaves = scramble_leaves(leaves, key)
    payload, _ = entropy_encode(leaves, width, height, entropy_mode)
    return Bitstream(width, height, qp, entropy_mode, key is not None, payload)


def encode(image, qp, key: ScrambleKey | None = None, entropy_mode="adaptive") -> Bitstream:
    img = pad_image(image)
    leaves, _ = code_picture(img, qp)
    return bitstream_from_leaves(leaves, img.shape[1], img.shape[0], qp, key, entropy_mode)


def decode_leaves(bs: Bitstream, key: ScrambleKey | None = None):
    """Entropy-decode and, for an authorised decoder, unscramble the leaves."""
    stages.tick("entropy_decode")
    leaves = entropy_decode(bs.payload, bs.width, bs.height, bs.entropy_mode)
    if bs.scrambled and key is not None:
        for cu in leaves:
            cu.qcoeffs = unscramble_tu(cu.qcoeffs, plan_for(key, cu.x, cu.y, cu.size * cu.size))
    return leaves


def decode_full(bs: Bitstream, key: ScrambleKey | None = None) -> np.ndarray:
    """Full reconstruction.

    A scrambled stream decoded without its key is reconstructed from the
    scrambled coefficients as they are.
    """
    leaves = decode_leaves(bs, key)
    stages.tick("picture_alloc")
    recon = np.zeros((bs.height, bs.width), dtype=np.int64)
    avail = np.zeros((bs.height, bs.width), dtype=bool)
    for cu in leaves:
        s = cu.size
        refs = gather_refs(recon, avail, cu.x, cu.y, s)
        stages.tick("prediction")
        pred = intra_predict(cu.ipm, refs, s)
        recon[cu.y:cu.y + s, cu.x:cu.x + s] = reconstruct_block(pred, cu.qcoeffs, bs.qp, s)
        avail[cu.y:cu.y + s, cu.x:cu.x + s] = True
    return recon.astype(np.uint8)
