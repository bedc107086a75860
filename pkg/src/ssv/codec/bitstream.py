"""Bitstream container: fixed little-endian header followed by the payload.

Layout::

    magic "SSV1" | version u8 | entropy_mode u8 | scrambled u8 | qp u8 |
    width u32 | height u32 | payload_length u64 | payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"SSV1"
VERSION = 1
ENTROPY_MODES = ("raw", "adaptive")
_HEADER = struct.Struct("<4sBBBBIIQ")
HEADER_SIZE = _HEADER.size


class BitstreamError(ValueError):
    """Base class for unreadable bitstreams."""


class FormatError(BitstreamError):
    """Wrong magic, version or header field."""


class MalformedBitstreamError(BitstreamError):
    """Payload is truncated or inconsistent with its header."""


@dataclass(frozen=True)
class Bitstream:
    width: int
    height: int
    qp: int
    entropy_mode: str
    scrambled: bool
    payload: bytes

    def __post_init__(self):
        if self.entropy_mode not in ENTROPY_MODES:
            raise FormatError(f"unknown entropy mode {self.entropy_mode!r}")
        if not 0 <= self.qp <= 51:
            raise FormatError(f"qp out of range: {self.qp}")
        if self.width <= 0 or self.height <= 0 or self.width % 32 or self.height % 32:
            raise FormatError(f"picture size must be positive multiples of 32, got {self.width}x{self.height}")

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, VERSION, ENTROPY_MODES.index(self.entropy_mode),
                            int(self.scrambled), self.qp, self.width, self.height,
                            len(self.payload))
        return head + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < 4 or data[:4] != MAGIC:
            raise FormatError("not an SSV bitstream (bad magic)")
        if len(data) < HEADER_SIZE:
            raise MalformedBitstreamError("truncated header")
        magic, version, mode, scrambled, qp, w, h, n = _HEADER.unpack_from(data)
        if version != VERSION:
            raise FormatError(f"unsupported bitstream version {version}")
        if mode >= len(ENTROPY_MODES):
            raise FormatError(f"unknown entropy mode id {mode}")
        if scrambled > 1:
            raise FormatError(f"bad scrambled flag {scrambled}")
        payload = data[HEADER_SIZE:HEADER_SIZE + n]
        if len(payload) != n:
            raise MalformedBitstreamError(
                f"payload truncated: header says {n} bytes, found {len(payload)}")
        if len(data) != HEADER_SIZE + n:
            raise MalformedBitstreamError("trailing bytes after payload")
        return cls(w, h, qp, ENTROPY_MODES[mode], bool(scrambled), bytes(payload))


def read_bitstream(path) -> Bitstream:
    with open(path, "rb") as fh:
        return Bitstream.from_bytes(fh.read())
