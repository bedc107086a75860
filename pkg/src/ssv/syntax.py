"""Syntax-only decoding: per-PU position, size, intra mode and bin count.

Nothing here dequantises, inverse-transforms, predicts or reconstructs;
coefficient bins are walked only to stay in step with the stream. That
holds for scrambled streams too, with no key involved.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import NamedTuple

from .codec.bitstream import Bitstream
from .codec.entropy import entropy_decode
from .codec import stages


class PuRecord(NamedTuple):
    x: int
    y: int
    size: int
    ipm: int
    bn: int


@dataclass
class SyntaxMap:
    width: int
    height: int
    qp: int
    records: list[PuRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PuRecord._fields)
        w.writerows(self.records)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, width, height, qp):
        rows = csv.DictReader(io.StringIO(text))
        if rows.fieldnames != list(PuRecord._fields):
            raise ValueError(f"syntax CSV header must be {','.join(PuRecord._fields)}")
        recs = [PuRecord(*(int(r[k]) for k in PuRecord._fields)) for r in rows]
        return cls(width, height, qp, recs)


def parse_syntax(bs: Bitstream) -> SyntaxMap:
    stages.tick("entropy_decode")
    leaves = entropy_decode(bs.payload, bs.width, bs.height, bs.entropy_mode,
                            keep_coeffs=False)
    recs = [PuRecord(cu.x, cu.y, cu.size, cu.ipm, cu.bn) for cu in leaves]
    return SyntaxMap(bs.width, bs.height, bs.qp, recs)


class BenchRow(NamedTuple):
    image: str
    full_s: float
    syntax_s: float
    ratio: float


def bench_decode(corpus, repeats=1):
    """Time full decoding against syntax-only parsing for each bitstream.

    ``corpus`` is an iterable of ``(name, Bitstream)``. Each path runs
    ``repeats`` times and the fastest run is kept.
    """
    from .codec.encoder import decode_full

    rows = []
    for name, bs in corpus:
        full = min(_timed(decode_full, bs) for _ in range(repeats))
        syn = min(_timed(parse_syntax, bs) for _ in range(repeats))
        rows.append(BenchRow(str(name), full, syn, full / syn if syn > 0 else float("inf")))
    return rows


def _timed(fn, *args):
    t = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t


def bench_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image", "full_s", "syntax_s", "ratio"])
    for r in rows:
        w.writerow([r.image, f"{r.full_s:.6f}", f"{r.syntax_s:.6f}", f"{r.ratio:.4f}"])
    return buf.getvalue()
