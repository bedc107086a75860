"""Three-channel feature images (IPM, PUS, BN) built from a SyntaxMap."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._util import round_half_away
from .codec.bitstream import Bitstream
from .syntax import SyntaxMap, parse_syntax

PUS_LEVELS = {4: 0, 8: 85, 16: 170, 32: 255}
MAX_IPM = 34
IPM, PUS, BN = range(3)


def map_ipm(ipm: int) -> int:
    if not 0 <= ipm <= MAX_IPM:
        raise ValueError(f"intra mode must be in [0, 34], got {ipm}")
    return round_half_away(ipm * 255 / MAX_IPM)


def map_pus(size: int) -> int:
    try:
        return PUS_LEVELS[size]
    except KeyError:
        raise ValueError(f"PU size must be one of 4/8/16/32, got {size}") from None


def map_bn(bn, bn_min, bn_max):
    """Min-max normalise a bin count to a byte; a constant image maps to 0."""
    if bn_max == bn_min:
        return 0 if np.isscalar(bn) else np.zeros(np.shape(bn), dtype=np.int64)
    return round_half_away((np.asarray(bn) - bn_min) * 255 / (bn_max - bn_min))


def build_feature_image(smap: SyntaxMap) -> np.ndarray:
    """Paint every PU's mapped values over its rectangle; returns (H, W, 3) uint8."""
    out = np.zeros((smap.height, smap.width, 3), dtype=np.uint8)
    if not smap.records:
        return out
    recs = np.array(smap.records, dtype=np.int64)
    bns = recs[:, 4]
    bn_bytes = np.atleast_1d(map_bn(bns, bns.min(), bns.max()))
    covered = np.zeros((smap.height, smap.width), dtype=np.int32)
    for (x, y, s, ipm, _), b in zip(smap.records, bn_bytes.tolist()):
        out[y:y + s, x:x + s] = (map_ipm(ipm), map_pus(s), b)
        covered[y:y + s, x:x + s] += 1
    if not np.all(covered == 1):
        raise ValueError("PU records do not tile the picture exactly once")
    return out


def bitstream_features(bs: Bitstream) -> np.ndarray:
    return build_feature_image(parse_syntax(bs))


class SyntaxFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless transformer from bitstreams (or their bytes) to feature images.

    ``transform`` returns an ``(n, H, W, 3)`` uint8 array; all inputs must
    share one picture size.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        feats = []
        for item in X:
            bs = item if isinstance(item, Bitstream) else Bitstream.from_bytes(bytes(item))
            feats.append(bitstream_features(bs))
        if not feats:
            return np.zeros((0, 0, 0, 3), dtype=np.uint8)
        if len({f.shape for f in feats}) != 1:
            raise ValueError("all bitstreams in a batch must share one picture size")
        return np.stack(feats)
