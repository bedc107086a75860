"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

import os

import numpy as np


class PnmError(ValueError):
    pass


def _tokens(data, count, pos):
    # Header tokens are whitespace separated; '#' starts a comment to end of line.
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PnmError("truncated PNM header")
        out.append(data[start:pos])
    return out, pos


def decode_pnm(data: bytes) -> np.ndarray:
    """Parse P5/P6 bytes. Returns (H, W) for P5 and (H, W, 3) for P6."""
    (magic, w, h, maxval), pos = _tokens(data, 4, 0)
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unsupported PNM magic {magic!r}")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PnmError("non-numeric PNM header field") from exc
    if maxval != 255:
        raise PnmError("only 8-bit PNM (maxval 255) is supported")
    if w <= 0 or h <= 0:
        raise PnmError("PNM dimensions must be positive")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    body = data[pos:pos + need]
    if len(body) != need:
        raise PnmError(f"PNM payload truncated: expected {need} bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(h, w).copy()
    return arr.reshape(h, w, 3).copy()


def encode_pgm(img) -> bytes:
    a = np.asarray(img, dtype=np.uint8)
    if a.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    h, w = a.shape
    return b"P5\n%d %d\n255\n" % (w, h) + a.tobytes()


def encode_ppm(img) -> bytes:
    a = np.asarray(img, dtype=np.uint8)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("PPM needs an (H, W, 3) array")
    h, w, _ = a.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(a).tobytes()


def write_atomic(path, data: bytes):
    """Write bytes via a temp file and rename, so readers never see partial files."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        a = decode_pnm(fh.read())
    if a.ndim == 3:
        # BT.601 luma for colour input
        a = to_luma(a)
    return a


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        a = decode_pnm(fh.read())
    if a.ndim != 3:
        raise PnmError(f"{path}: expected P6 colour image")
    return a


def write_pgm(path, img):
    write_atomic(path, encode_pgm(img))


def write_ppm(path, img):
    write_atomic(path, encode_ppm(img))


def to_luma(rgb) -> np.ndarray:
    """BT.601 luma of an RGB byte image."""
    a = np.asarray(rgb, dtype=np.float64)
    y = 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)
