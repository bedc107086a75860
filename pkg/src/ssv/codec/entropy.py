"""Binarisation of the coding tree and the two bin back-ends.

Per leaf, bins go out in this order: the split flags charged to it, six
fixed-length mode bins, the coded-block flag, and for coded blocks the
last significant scan position, one significance bin per earlier scan
position, then per significant coefficient ``|level| - 1`` in order-0
Exp-Golomb followed by a sign bin.

``raw`` writes each bin as one bit (MSB first). ``adaptive`` sends every
non-sign bin through a binary range coder with one adaptive probability per
syntax context; sign bins bypass at probability one half.

The bin-level loops are numba kernels: Python walks the coding tree and
checks it, the kernels binarise, code and parse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bitstream import MalformedBitstreamError

CTX_SPLIT, CTX_MODE, CTX_CBF, CTX_LAST, CTX_SIG, CTX_EG_PREFIX, CTX_EG_SUFFIX = range(7)
N_CONTEXTS = 7
MODE_BINS = 6
CTU = 32
MIN_CU = 4

PROB_BITS = 16
PROB_INIT = 1 << (PROB_BITS - 1)
ADAPT_SHIFT = 5
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


@dataclass(eq=False)
class CodingUnit:
    """One quadtree leaf; prediction, transform and coding unit coincide.

    Equality covers position, size, mode and coefficients but not ``bn``.
    """

    x: int
    y: int
    size: int
    ipm: int
    qcoeffs: np.ndarray | None = None  # zigzag order, size**2 entries
    bn: int | None = field(default=None)

    def __eq__(self, other):
        if not isinstance(other, CodingUnit):
            return NotImplemented
        if (self.x, self.y, self.size, self.ipm) != (other.x, other.y, other.size, other.ipm):
            return False
        if self.qcoeffs is None or other.qcoeffs is None:
            return self.qcoeffs is other.qcoeffs
        return bool(np.array_equal(self.qcoeffs, other.qcoeffs))




BYPASS = -1  # context value marking a bypass (sign) bin

_ERRORS = {
    1: "payload ended inside a syntax element",
    2: "intra mode out of range",
    3: "runaway Exp-Golomb prefix",
    4: "unexpected data after the last coding unit",
}


def last_pos_bins(size):
    return 2 * (size.bit_length() - 1)  # ceil(log2(size**2)) for powers of two


# -- encoding ---------------------------------------------------------------


@njit(cache=True)
def _binarize(split_bins, split_end, ipms, sizes, coeffs, bins, ctxs, marks):
    """Write every leaf's bins in coding order; ``marks[i]`` is the running count."""
    n = 0
    s0 = 0
    c0 = 0
    for i in range(ipms.size):
        for j in range(s0, split_end[i]):
            bins[n] = split_bins[j]
            ctxs[n] = CTX_SPLIT
            n += 1
        s0 = split_end[i]
        for k in range(MODE_BINS - 1, -1, -1):
            bins[n] = (ipms[i] >> k) & 1
            ctxs[n] = CTX_MODE
            n += 1
        size = sizes[i]
        q = coeffs[c0:c0 + size * size]
        c0 += size * size
        last = -1
        for p in range(q.size - 1, -1, -1):
            if q[p] != 0:
                last = p
                break
        bins[n] = 1 if last >= 0 else 0
        ctxs[n] = CTX_CBF
        n += 1
        if last >= 0:
            nb = 0
            t = size * size
            while t > 1:
                t >>= 1
                nb += 1
            for k in range(nb - 1, -1, -1):
                bins[n] = (last >> k) & 1
                ctxs[n] = CTX_LAST
                n += 1
            for p in range(last):
                bins[n] = 1 if q[p] != 0 else 0
                ctxs[n] = CTX_SIG
                n += 1
            for p in range(last + 1):
                level = q[p]
                if level == 0:
                    continue
                v = -level if level < 0 else level  # EG0 of |level| - 1 codes v = |level|
                k = 0
                t = v
                while t > 1:
                    t >>= 1
                    k += 1
                for _ in range(k):
                    bins[n] = 1
                    ctxs[n] = CTX_EG_PREFIX
                    n += 1
                bins[n] = 0
                ctxs[n] = CTX_EG_PREFIX
                n += 1
                for j in range(k - 1, -1, -1):
                    bins[n] = (v >> j) & 1
                    ctxs[n] = CTX_EG_SUFFIX
                    n += 1
                bins[n] = 1 if level < 0 else 0
                ctxs[n] = BYPASS
                n += 1
        marks[i] = n
    return n


@njit(cache=True)
def _shift_low(st, out):
    """Move the top byte of ``low`` out, resolving a pending carry.

    ``st`` holds low, cache, cache_size and the output position.
    """
    low = st[0]
    if low < 0xFF000000 or low > _MASK32:
        carry = low >> 32
        temp = st[1]
        while True:
            out[st[3]] = (temp + carry) & 0xFF
            st[3] += 1
            temp = 0xFF
            st[2] -= 1
            if st[2] == 0:
                break
        st[1] = (low >> 24) & 0xFF
    st[2] += 1
    st[0] = (low & 0x00FFFFFF) << 8


@njit(cache=True)
def _range_encode(bins, ctxs):
    """Carry-propagating binary range coder (32-bit range, byte output)."""
    # each bin narrows the range by at most ~11 bits, so two bytes per bin is a safe bound
    out = np.zeros(2 * bins.size + 16, dtype=np.uint8)
    st = np.zeros(4, dtype=np.int64)
    st[2] = 1
    rng = _MASK32
    probs = np.full(N_CONTEXTS, PROB_INIT, dtype=np.int64)
    for i in range(bins.size):
        b = bins[i]
        c = ctxs[i]
        if c == BYPASS:
            rng >>= 1
            if b:
                st[0] += rng
        else:
            p = probs[c]
            bound = (rng >> PROB_BITS) * p
            if b:
                rng = bound
                probs[c] = p + (((1 << PROB_BITS) - p) >> ADAPT_SHIFT)
            else:
                st[0] += bound
                rng -= bound
                probs[c] = p - (p >> ADAPT_SHIFT)
        while rng < _TOP:
            rng <<= 8
            _shift_low(st, out)
    for _ in range(5):
        _shift_low(st, out)
    return out[:st[3]]


def ctu_origins(width, height):
    for y in range(0, height, CTU):
        for x in range(0, width, CTU):
            yield x, y


def _check_mode(mode):
    if mode not in ("raw", "adaptive"):
        raise ValueError(f"entropy mode must be 'raw' or 'adaptive', got {mode!r}")


def _coding_order(leaves, width, height):
    """Leaves in coding order, the split flags, and how many flags precede each leaf."""
    by_pos = {(cu.x, cu.y): cu for cu in leaves}
    if len(by_pos) != len(leaves):
        raise ValueError("duplicate leaf positions")
    order, flags, ends = [], [], []

    def visit(x, y, size):
        cu = by_pos.get((x, y))
        if size > MIN_CU:
            if cu is None or cu.size != size:
                flags.append(1)
                h = size // 2
                for dy in (0, h):
                    for dx in (0, h):
                        visit(x + dx, y + dy, h)
                return
            flags.append(0)
        elif cu is None or cu.size != size:
            raise ValueError(f"coding tree does not tile the picture at ({x}, {y})")
        order.append(cu)
        ends.append(len(flags))

    for x, y in ctu_origins(width, height):
        visit(x, y, CTU)
    if len(order) != len(leaves):
        raise ValueError("leaves outside the coding tree")
    return order, flags, ends


def entropy_encode(leaves, width, height, mode):
    """Binarise and code a list of leaves.

    Returns ``(payload, bin_counts)`` where ``bin_counts[i]`` belongs to the
    i-th leaf in coding order (CTU raster, z-order inside).
    """
    _check_mode(mode)
    order, flags, ends = _coding_order(leaves, width, height)
    for cu in order:
        if not 0 <= cu.ipm <= 34:
            raise ValueError(f"intra mode {cu.ipm} out of range at ({cu.x}, {cu.y})")
        if cu.qcoeffs is None or np.shape(cu.qcoeffs) != (cu.size * cu.size,):
            raise ValueError(f"leaf at ({cu.x}, {cu.y}) needs {cu.size ** 2} coefficients")
    sizes = np.array([cu.size for cu in order], dtype=np.int64)
    coeffs = (np.concatenate([np.asarray(cu.qcoeffs, dtype=np.int64) for cu in order])
              if order else np.zeros(0, dtype=np.int64))
    nz = np.abs(coeffs[coeffs != 0]).astype(np.float64)
    bound = len(flags) + int((sizes * sizes).sum()) + 20 * len(order) + 2 * int(
        np.frexp(nz)[1].sum())  # frexp exponent = bit length
    bins = np.empty(bound, dtype=np.uint8)
    ctxs = np.empty(bound, dtype=np.int8)
    marks = np.empty(len(order), dtype=np.int64)
    n = _binarize(np.array(flags, dtype=np.uint8), np.array(ends, dtype=np.int64),
                  np.array([cu.ipm for cu in order], dtype=np.int64), sizes, coeffs,
                  bins, ctxs, marks)
    if mode == "raw":
        payload = np.packbits(bins[:n]).tobytes()
    else:
        payload = _range_encode(bins[:n], ctxs[:n]).tobytes()
    return payload, np.diff(marks, prepend=0).tolist()


# -- decoding ---------------------------------------------------------------

# reader state slots
_POS, _RANGE, _CODE, _COUNT, _ERR = range(5)


@njit(cache=True)
def _read_bin(data, raw, st, probs, ctx):
    st[_COUNT] += 1
    if raw:
        p = st[_POS]
        if p >= data.size * 8:
            st[_ERR] = 1
            return 0
        st[_POS] = p + 1
        return (data[p >> 3] >> (7 - (p & 7))) & 1
    rng = st[_RANGE]
    code = st[_CODE]
    if ctx == BYPASS:
        rng >>= 1
        if code >= rng:
            code -= rng
            b = 1
        else:
            b = 0
    else:
        p = probs[ctx]
        bound = (rng >> PROB_BITS) * p
        if code < bound:
            rng = bound
            probs[ctx] = p + (((1 << PROB_BITS) - p) >> ADAPT_SHIFT)
            b = 1
        else:
            code -= bound
            rng -= bound
            probs[ctx] = p - (p >> ADAPT_SHIFT)
            b = 0
    while rng < _TOP:
        if st[_POS] >= data.size:
            st[_ERR] = 1
            return 0
        rng = (rng << 8) & _MASK32
        code = ((code << 8) | data[st[_POS]]) & _MASK32
        st[_POS] += 1
    st[_RANGE] = rng
    st[_CODE] = code
    return b


@njit(cache=True)
def _read_fixed(data, raw, st, probs, nbits, ctx):
    v = 0
    for _ in range(nbits):
        v = (v << 1) | _read_bin(data, raw, st, probs, ctx)
    return v


@njit(cache=True)
def _parse(data, raw, width, height, keep):
    """Walk the whole coding tree.

    Returns ``(error, info, coeffs)``: ``info`` rows are x, y, size, ipm, bn
    per leaf (for an error, the row after the last leaf holds where it
    happened) and ``coeffs`` concatenates the leaves' levels when ``keep``.
    """
    info = np.zeros(((width // MIN_CU) * (height // MIN_CU) + 1, 5), dtype=np.int64)
    coeffs = np.zeros(width * height if keep else 0, dtype=np.int64)
    st = np.zeros(5, dtype=np.int64)
    probs = np.full(N_CONTEXTS, PROB_INIT, dtype=np.int64)
    if not raw:
        st[_RANGE] = _MASK32
        for _ in range(5):
            if st[_POS] >= data.size:
                return 1, info[:1], coeffs
            st[_CODE] = (st[_CODE] << 8) | data[st[_POS]]
            st[_POS] += 1
    stack = np.zeros((16, 3), dtype=np.int64)
    positions = np.zeros(CTU * CTU, dtype=np.int64)
    n_leaf = 0
    offset = 0
    mark = 0
    for cy in range(0, height, CTU):
        for cx in range(0, width, CTU):
            stack[0, 0] = cx
            stack[0, 1] = cy
            stack[0, 2] = CTU
            sp = 1
            while sp > 0:
                sp -= 1
                x = stack[sp, 0]
                y = stack[sp, 1]
                size = stack[sp, 2]
                info[n_leaf, 0] = x
                info[n_leaf, 1] = y
                if size > MIN_CU and _read_bin(data, raw, st, probs, CTX_SPLIT):
                    h = size // 2
                    for k in range(3, -1, -1):  # pushed in reverse so z-order pops first
                        stack[sp, 0] = x + h * (k & 1)
                        stack[sp, 1] = y + h * (k >> 1)
                        stack[sp, 2] = h
                        sp += 1
                    continue
                ipm = _read_fixed(data, raw, st, probs, MODE_BINS, CTX_MODE)
                if st[_ERR]:
                    return 1, info[:n_leaf + 1], coeffs
                if ipm > 34:
                    return 2, info[:n_leaf + 1], coeffs
                if _read_bin(data, raw, st, probs, CTX_CBF):
                    nb = 0
                    t = size * size
                    while t > 1:
                        t >>= 1
                        nb += 1
                    last = _read_fixed(data, raw, st, probs, nb, CTX_LAST)
                    n_pos = 0
                    for p in range(last):
                        if _read_bin(data, raw, st, probs, CTX_SIG):
                            positions[n_pos] = p
                            n_pos += 1
                    positions[n_pos] = last
                    n_pos += 1
                    for i in range(n_pos):
                        k = 0
                        while _read_bin(data, raw, st, probs, CTX_EG_PREFIX):
                            k += 1
                            if k > 40:
                                return 3, info[:n_leaf + 1], coeffs
                        v = 1
                        for _ in range(k):
                            v = (v << 1) | _read_bin(data, raw, st, probs, CTX_EG_SUFFIX)
                        if _read_bin(data, raw, st, probs, BYPASS):
                            v = -v
                        if keep:
                            coeffs[offset + positions[i]] = v
                if st[_ERR]:
                    return 1, info[:n_leaf + 1], coeffs
                info[n_leaf, 2] = size
                info[n_leaf, 3] = ipm
                info[n_leaf, 4] = st[_COUNT] - mark  # includes the split flags read since the last leaf
                mark = st[_COUNT]
                n_leaf += 1
                if keep:
                    offset += size * size
    if raw:
        rest = data.size * 8 - st[_POS]
        if rest >= 8:
            return 4, info[:n_leaf + 1], coeffs
        for p in range(st[_POS], data.size * 8):
            if (data[p >> 3] >> (7 - (p & 7))) & 1:
                return 4, info[:n_leaf + 1], coeffs
    elif st[_POS] != data.size:
        return 4, info[:n_leaf + 1], coeffs
    return 0, info[:n_leaf], coeffs


def entropy_decode(payload, width, height, mode, keep_coeffs=True):
    """Inverse of :func:`entropy_encode`; returns leaves with ``bn`` set.

    With ``keep_coeffs=False`` coefficient levels are parsed only to advance
    the stream and ``qcoeffs`` is left as ``None``.
    """
    _check_mode(mode)
    data = np.frombuffer(bytes(payload), dtype=np.uint8)
    err, info, coeffs = _parse(data, mode == "raw", int(width), int(height), keep_coeffs)
    if err:
        where = "" if err == 4 else " (coding unit at ({}, {}))".format(*info[-1, :2].tolist())
        raise MalformedBitstreamError(_ERRORS[err] + where)
    leaves = []
    offset = 0
    for x, y, size, ipm, bn in info.tolist():
        q = None
        if keep_coeffs:
            q = coeffs[offset:offset + size * size]
            offset += size * size
        leaves.append(CodingUnit(x, y, size, ipm, q, bn=bn))
    return leaves
