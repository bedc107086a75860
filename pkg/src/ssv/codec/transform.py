"""Orthonormal 2-D DCT-II, scalar quantisation and zigzag scanning."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .._util import round_half_away

SIZES = (4, 8, 16, 32)


@lru_cache(maxsize=None)
def dct_matrix(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    C = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    C[0, :] = np.sqrt(1.0 / n)
    C.setflags(write=False)
    return C


def _check_square(block):
    b = np.asarray(block, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] not in SIZES:
        raise ValueError(f"transform needs a square block of size 4/8/16/32, got {b.shape}")
    return b


def forward_transform(block):
    b = _check_square(block)
    C = dct_matrix(b.shape[0])
    return C @ b @ C.T


def inverse_transform(coeffs):
    c = _check_square(coeffs)
    C = dct_matrix(c.shape[0])
    return C.T @ c @ C


def qstep(qp):
    if not 0 <= qp <= 51:
        raise ValueError(f"qp must be in [0, 51], got {qp}")
    return 2.0 ** ((qp - 4) / 6.0)


def quantize(coeffs, qp):
    return round_half_away(np.asarray(coeffs, dtype=np.float64) / qstep(qp))


def dequantize(qcoeffs, qp):
    return np.asarray(qcoeffs, dtype=np.float64) * qstep(qp)


@lru_cache(maxsize=None)
def zigzag_order(n):
    """Flat raster indices of an n x n block in zigzag scan order."""
    order = sorted(((r, c) for r in range(n) for c in range(n)),
                   key=lambda rc: (rc[0] + rc[1],
                                   rc[1] if (rc[0] + rc[1]) % 2 == 0 else rc[0]))
    out = np.array([r * n + c for r, c in order], dtype=np.int64)
    out.setflags(write=False)
    return out


def to_zigzag(block):
    b = np.asarray(block)
    return b.reshape(-1)[zigzag_order(b.shape[0])]


def from_zigzag(scan, n):
    out = np.empty(n * n, dtype=np.asarray(scan).dtype)
    out[zigzag_order(n)] = scan
    return out.reshape(n, n)
