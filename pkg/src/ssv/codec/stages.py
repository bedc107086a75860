"""Decode-stage counters.

Stages tick only while a :func:`count_stages` block is open, so normal runs
pay nothing and share no state::

    with count_stages() as seen:
        decode_full(bs)
    assert seen["inverse_transform"] > 0
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager

STAGES = ("entropy_decode", "dequantize", "inverse_transform", "prediction",
          "reconstruction", "picture_alloc")

_active: list[Counter] = []


def tick(stage, n=1):
    for c in _active:
        c[stage] += n


@contextmanager
def count_stages():
    c = Counter()
    _active.append(c)
    try:
        yield c
    finally:
        _active.remove(c)
