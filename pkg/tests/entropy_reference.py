"""Straightforward per-bin Python coder, kept as an oracle for the kernels."""

import numpy as np

from ssv.codec.bitstream import MalformedBitstreamError
from ssv.codec.entropy import (ADAPT_SHIFT, CTU, CTX_CBF, CTX_EG_PREFIX, CTX_EG_SUFFIX,
                               CTX_LAST, CTX_MODE, CTX_SIG, CTX_SPLIT, MIN_CU, MODE_BINS,
                               N_CONTEXTS, PROB_BITS, PROB_INIT, CodingUnit, ctu_origins,
                               last_pos_bins)

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


# -- bin back-ends ----------------------------------------------------------


class RawBinWriter:
    def __init__(self):
        self.bits = bytearray()

    def put(self, b, ctx):
        self.bits.append(b)

    def bypass(self, b):
        self.bits.append(b)

    @property
    def count(self):
        return len(self.bits)

    def finish(self) -> bytes:
        return np.packbits(np.frombuffer(bytes(self.bits), dtype=np.uint8)).tobytes()


class RawBinReader:
    def __init__(self, payload: bytes):
        self.bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8)).tolist()
        self.pos = 0

    def get(self, ctx):
        try:
            b = self.bits[self.pos]
        except IndexError:
            raise MalformedBitstreamError("payload ended inside a syntax element") from None
        self.pos += 1
        return b

    def bypass(self):
        return self.get(None)

    def close(self):
        rest = self.bits[self.pos:]
        if len(rest) >= 8 or any(rest):
            raise MalformedBitstreamError("unexpected data after the last coding unit")


class RangeEncoder:
    """Carry-propagating binary range coder (32-bit range, byte output)."""

    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()
        self.probs = [PROB_INIT] * N_CONTEXTS
        self.count = 0

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self.cache
            while True:
                self.out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if not self.cache_size:
                    break
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def put(self, b, ctx):
        self.count += 1
        p = self.probs[ctx]
        bound = (self.range >> PROB_BITS) * p
        if b:
            self.range = bound
            self.probs[ctx] = p + (((1 << PROB_BITS) - p) >> ADAPT_SHIFT)
        else:
            self.low += bound
            self.range -= bound
            self.probs[ctx] = p - (p >> ADAPT_SHIFT)
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def bypass(self, b):
        self.count += 1
        self.range >>= 1
        if b:
            self.low += self.range
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, payload: bytes):
        self.data = payload
        self.pos = 0
        self.range = _MASK32
        self.code = 0
        self.probs = [PROB_INIT] * N_CONTEXTS
        for _ in range(5):
            self.code = (self.code << 8) | self._byte()

    def _byte(self):
        if self.pos >= len(self.data):
            raise MalformedBitstreamError("payload ended inside a syntax element")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def get(self, ctx):
        p = self.probs[ctx]
        bound = (self.range >> PROB_BITS) * p
        if self.code < bound:
            self.range = bound
            self.probs[ctx] = p + (((1 << PROB_BITS) - p) >> ADAPT_SHIFT)
            b = 1
        else:
            self.code -= bound
            self.range -= bound
            self.probs[ctx] = p - (p >> ADAPT_SHIFT)
            b = 0
        while self.range < _TOP:
            self.range = (self.range << 8) & _MASK32
            self.code = ((self.code << 8) | self._byte()) & _MASK32
        return b

    def bypass(self):
        self.range >>= 1
        if self.code >= self.range:
            self.code -= self.range
            b = 1
        else:
            b = 0
        while self.range < _TOP:
            self.range = (self.range << 8) & _MASK32
            self.code = ((self.code << 8) | self._byte()) & _MASK32
        return b

    def close(self):
        if self.pos != len(self.data):
            raise MalformedBitstreamError("unexpected data after the last coding unit")


def make_writer(mode):
    if mode == "raw":
        return RawBinWriter()
    if mode == "adaptive":
        return RangeEncoder()
    raise ValueError(f"entropy mode must be 'raw' or 'adaptive', got {mode!r}")


def make_reader(mode, payload):
    if mode == "raw":
        return RawBinReader(payload)
    if mode == "adaptive":
        return RangeDecoder(payload)
    raise ValueError(f"entropy mode must be 'raw' or 'adaptive', got {mode!r}")


# -- syntax -----------------------------------------------------------------


def _put_fixed(w, value, nbits, ctx):
    for k in range(nbits - 1, -1, -1):
        w.put((value >> k) & 1, ctx)


def _get_fixed(r, nbits, ctx):
    v = 0
    for _ in range(nbits):
        v = (v << 1) | r.get(ctx)
    return v


def _put_leaf(w, cu):
    _put_fixed(w, cu.ipm, MODE_BINS, CTX_MODE)
    q = cu.qcoeffs
    nz = np.flatnonzero(q)
    if nz.size == 0:
        w.put(0, CTX_CBF)
        return
    w.put(1, CTX_CBF)
    last = int(nz[-1])
    _put_fixed(w, last, last_pos_bins(cu.size), CTX_LAST)
    put = w.put
    sig = (q[:last] != 0).tolist()
    for s in sig:
        put(s, CTX_SIG)
    for level in q[nz].tolist():
        v = abs(level)  # |level| - 1 + 1
        k = v.bit_length() - 1
        for _ in range(k):
            put(1, CTX_EG_PREFIX)
        put(0, CTX_EG_PREFIX)
        for j in range(k - 1, -1, -1):
            put((v >> j) & 1, CTX_EG_SUFFIX)
        w.bypass(1 if level < 0 else 0)


def _get_leaf(r, x, y, size, keep_coeffs):
    ipm = _get_fixed(r, MODE_BINS, CTX_MODE)
    if ipm > 34:
        raise MalformedBitstreamError(f"intra mode {ipm} out of range at ({x}, {y})")
    n = size * size
    q = np.zeros(n, dtype=np.int64) if keep_coeffs else None
    if not r.get(CTX_CBF):
        return ipm, q
    last = _get_fixed(r, last_pos_bins(size), CTX_LAST)
    get = r.get
    positions = [p for p in range(last) if get(CTX_SIG)]
    positions.append(last)
    for p in positions:
        k = 0
        while get(CTX_EG_PREFIX):
            k += 1
            if k > 40:
                raise MalformedBitstreamError("runaway Exp-Golomb prefix")
        v = 1
        for _ in range(k):
            v = (v << 1) | get(CTX_EG_SUFFIX)
        level = -v if r.bypass() else v
        if keep_coeffs:
            q[p] = level
    return ipm, q


def _put_node(w, leaves, x, y, size, marks):
    if size > MIN_CU:
        cu = leaves.get((x, y))
        if cu is not None and cu.size == size:
            w.put(0, CTX_SPLIT)
        else:
            w.put(1, CTX_SPLIT)
            h = size // 2
            for dy in (0, h):
                for dx in (0, h):
                    _put_node(w, leaves, x + dx, y + dy, h, marks)
            return
    else:
        cu = leaves.get((x, y))
        if cu is None or cu.size != size:
            raise ValueError(f"coding tree does not tile the picture at ({x}, {y})")
    _put_leaf(w, cu)
    marks.append(w.count)


def entropy_encode(leaves, width, height, mode):
    """Binarise and code a list of leaves.

    Returns ``(payload, bin_counts)`` where ``bin_counts[i]`` belongs to the
    i-th leaf in coding order (CTU raster, z-order inside).
    """
    by_pos = {(cu.x, cu.y): cu for cu in leaves}
    if len(by_pos) != len(leaves):
        raise ValueError("duplicate leaf positions")
    w = make_writer(mode)
    marks = []
    for x, y in ctu_origins(width, height):
        _put_node(w, by_pos, x, y, CTU, marks)
    if len(marks) != len(leaves):
        raise ValueError("leaves outside the coding tree")
    counts = np.diff([0] + marks).tolist()
    return w.finish(), counts


class _CountingReader:
    """Wraps a reader and counts bins, so bin totals are back-end independent."""

    def __init__(self, inner):
        self.inner = inner
        self.count = 0
        self.mark = 0

    def get(self, ctx):
        self.count += 1
        return self.inner.get(ctx)

    def bypass(self):
        self.count += 1
        return self.inner.bypass()


def entropy_decode(payload, width, height, mode, keep_coeffs=True):
    """Inverse of :func:`entropy_encode`; returns leaves with ``bn`` set.

    With ``keep_coeffs=False`` coefficient levels are parsed only to advance
    the stream and ``qcoeffs`` is left as ``None``.
    """
    r = _CountingReader(make_reader(mode, payload))
    leaves = []
    for x, y in ctu_origins(width, height):
        _decode_node(r, x, y, CTU, leaves, keep_coeffs)
    r.inner.close()
    return leaves


def _decode_node(r, x, y, size, leaves, keep_coeffs):
    if size > MIN_CU and r.get(CTX_SPLIT):
        h = size // 2
        for dy in (0, h):
            for dx in (0, h):
                _decode_node(r, x + dx, y + dy, h, leaves, keep_coeffs)
        return
    ipm, q = _get_leaf(r, x, y, size, keep_coeffs)
    # split flags read since the previous leaf are charged to this one
    leaves.append(CodingUnit(x, y, size, ipm, q, bn=r.count - r.mark))
    r.mark = r.count
