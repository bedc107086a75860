"""Intra prediction: planar (0), DC (1) and 33 angular modes (2-34).

Reference samples come as one line of ``4*size + 1`` values in the order
the substitution process scans them::

    refs[0]            left column, lowest sample (row 2*size - 1)
    refs[2*size - 1]   left column, row 0
    refs[2*size]       top-left corner
    refs[2*size + 1]   top row, column 0
    refs[4*size]       top row, column 2*size - 1

Every mode is an integer linear map of the references followed by a
rounding shift, so each (mode, size) pair is stored as a weight matrix.
Boundary smoothing filters are not applied.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import sparse

N_MODES = 35
PLANAR = 0
DC = 1
BLOCK_SIZES = (4, 8, 16, 32)
SPARSE_FROM = 16

# displacement per row/column in 1/32 sample, modes 2..34
ANGLE = (32, 26, 21, 17, 13, 9, 5, 2, 0, -2, -5, -9, -13, -17, -21, -26,
         -32, -26, -21, -17, -13, -9, -5, -2, 0, 2, 5, 9, 13, 17, 21, 26, 32)
# inverse angle for the negative-displacement modes 11..25
INV_ANGLE = {11: -4096, 12: -1638, 13: -910, 14: -630, 15: -482, 16: -390,
             17: -315, 18: -256, 19: -315, 20: -390, 21: -482, 22: -630,
             23: -910, 24: -1638, 25: -4096}


class InvalidModeError(ValueError):
    pass


def _left(j, size):
    """Index into refs of left sample at row j (j = -1 is the corner)."""
    return 2 * size - 1 - j


def _top(i, size):
    """Index into refs of top sample at column i (i = -1 is the corner)."""
    return 2 * size + 1 + i


def _mode_weights(mode, size):
    """Return (W, add, shift) with pred = (W @ refs + add) >> shift."""
    n = 4 * size + 1
    log2 = size.bit_length() - 1
    W = np.zeros((size, size, n), dtype=np.int64)
    if mode == PLANAR:
        for y in range(size):
            for x in range(size):
                W[y, x, _left(y, size)] += size - 1 - x
                W[y, x, _top(size, size)] += x + 1
                W[y, x, _top(x, size)] += size - 1 - y
                W[y, x, _left(size, size)] += y + 1
        return W.reshape(size * size, n), size, log2 + 1
    if mode == DC:
        for k in range(size):
            W[:, :, _top(k, size)] += 1
            W[:, :, _left(k, size)] += 1
        return W.reshape(size * size, n), size, log2 + 1

    angle = ANGLE[mode - 2]
    vertical = mode >= 18
    main = _top if vertical else _left
    side = _left if vertical else _top
    # ref[k] for k in [-size, 2*size], stored at offset `size`
    ref = {}
    for k in range(0, 2 * size + 1):
        ref[k] = main(k - 1, size)
    if angle < 0 and (size * angle) >> 5 < -1:
        inv = INV_ANGLE[mode]
        for k in range((size * angle) >> 5, 0):
            ref[k] = side(-1 + ((k * inv + 128) >> 8), size)
    for a in range(size):          # distance from the main reference edge
        idx = ((a + 1) * angle) >> 5
        frac = ((a + 1) * angle) & 31
        for b in range(size):      # position along the edge
            y, x = (a, b) if vertical else (b, a)
            W[y, x, ref[b + idx + 1]] += 32 - frac
            if frac:
                W[y, x, ref[b + idx + 2]] += frac
    return W.reshape(size * size, n), 16, 5


@lru_cache(maxsize=None)
def mode_table(size):
    """All 35 modes for one block size on a common rounding shift.

    Returns float64 ``(35 * size * size, 4 * size + 1)`` weights (CSR for
    the larger sizes, where a dense table no longer fits in cache), an add
    vector and the shared shift. Products stay far below 2**53 so the
    float matmul is exact.
    """
    if size not in BLOCK_SIZES:
        raise ValueError(f"unsupported block size {size}")
    parts = [_mode_weights(m, size) for m in range(N_MODES)]
    shift = max(p[2] for p in parts)
    mats, adds = [], []
    for W, add, sh in parts:
        k = 1 << (shift - sh)
        mats.append(W * k)
        adds.append(np.full(size * size, add * k, dtype=np.int64))
    W = np.concatenate(mats).astype(np.float64)
    add = np.concatenate(adds).astype(np.float64)
    if size >= SPARSE_FROM:
        W = sparse.csr_array(W)
    else:
        W.setflags(write=False)
    add.setflags(write=False)
    return W, add, float(1 << shift)


def predict_all(refs, size):
    """Predict a block in every mode at once, shape (35, size, size)."""
    W, add, div = mode_table(size)
    p = W @ np.asarray(refs, dtype=np.float64)
    p += add
    p *= 1.0 / div  # power of two, so exact
    np.floor(p, out=p)
    return p.reshape(N_MODES, size, size)


def intra_predict(mode, refs, size):
    """Predicted ``size x size`` block (int64) for a single mode."""
    if not isinstance(mode, (int, np.integer)) or not 0 <= mode < N_MODES:
        raise InvalidModeError(f"intra mode must be an integer in [0, 34], got {mode!r}")
    refs = np.asarray(refs, dtype=np.int64)
    if refs.shape != (4 * size + 1,):
        raise ValueError(f"expected {4 * size + 1} reference samples, got {refs.shape}")
    W, add, div = _mode_rows(int(mode), size)
    p = np.floor((W @ refs.astype(np.float64) + add) / div)
    return p.astype(np.int64).reshape(size, size)


@lru_cache(maxsize=None)
def _mode_rows(mode, size):
    W, add, div = mode_table(size)
    rows = slice(mode * size * size, (mode + 1) * size * size)
    return W[rows], add[rows], div


def gather_refs(recon, avail, x, y, size):
    """Collect and substitute reference samples for the block at (x, y).

    ``avail`` marks samples that are inside the picture and already
    reconstructed. Missing samples copy the previous one in scan order; a
    missing first sample takes the first available one; nothing available
    gives 128 everywhere.
    """
    H, W = recon.shape
    n = 4 * size + 1
    ys = np.empty(n, dtype=np.int64)
    xs = np.empty(n, dtype=np.int64)
    ys[:2 * size] = y + np.arange(2 * size - 1, -1, -1)
    xs[:2 * size] = x - 1
    ys[2 * size] = y - 1
    xs[2 * size] = x - 1
    ys[2 * size + 1:] = y - 1
    xs[2 * size + 1:] = x + np.arange(2 * size)
    inside = (ys >= 0) & (ys < H) & (xs >= 0) & (xs < W)
    ok = np.zeros(n, dtype=bool)
    ok[inside] = avail[ys[inside], xs[inside]]
    if not ok.any():
        return np.full(n, 128, dtype=np.int64)
    vals = np.zeros(n, dtype=np.int64)
    vals[ok] = recon[ys[ok], xs[ok]]
    if ok.all():
        return vals
    # forward fill from the last available index; leading gap takes the first available
    idx = np.where(ok, np.arange(n), -1)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmax(ok))
    idx[idx < 0] = first
    return vals[idx]
