"""Key-driven scrambling of quantised AC coefficients inside each TU.

Each TU gets its own plan: a Fisher-Yates permutation of the AC scan
positions followed by per-position sign flips, both drawn from a SplitMix64
stream seeded by the key and the TU's pixel coordinates. DC is never
touched. Scrambling permutes first and flips signs second; unscrambling
runs the two steps in reverse.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
ENV_VAR = "SSV_KEY"


class InvalidKeyError(ValueError):
    pass


def mix64(z):
    """SplitMix64 output function on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64_stream(seed, n):
    """First ``n`` outputs of SplitMix64 seeded with ``seed`` as uint64."""
    if n == 0:
        return np.zeros(0, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _rotl64(v, r):
    v &= MASK64
    return ((v << r) | (v >> (64 - r))) & MASK64


@dataclass(frozen=True)
class ScrambleKey:
    seed: int

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise InvalidKeyError("scramble key must be a 64-bit unsigned integer")

    @classmethod
    def from_hex(cls, text: str) -> "ScrambleKey":
        t = text.strip().lower()
        if t.startswith("0x"):
            t = t[2:]
        if len(t) != 16 or any(c not in "0123456789abcdef" for c in t):
            raise InvalidKeyError(f"scramble key must be 16 hex digits, got {text!r}")
        return cls(int(t, 16))

    def hex(self) -> str:
        return f"{self.seed:016x}"

    def __repr__(self):
        return "ScrambleKey(<hidden>)"


def key_from_env(flag_value=None):
    """Key from an explicit flag value, else the SSV_KEY variable, else None."""
    text = flag_value if flag_value else os.environ.get(ENV_VAR)
    return ScrambleKey.from_hex(text) if text else None


def derive_tu_seed(key: ScrambleKey, tu_x: int, tu_y: int) -> int:
    v = key.seed ^ ((tu_x * GAMMA) & MASK64) ^ _rotl64(tu_y, 32)
    return mix64(v)


@dataclass(frozen=True)
class TuScramblePlan:
    """permutation[k] is the source scan position moved to position k + 1."""

    permutation: np.ndarray
    signs: np.ndarray

    @property
    def n_coeffs(self):
        return len(self.permutation) + 1


@lru_cache(maxsize=4096)
def make_plan(seed: int, n_coeffs: int) -> TuScramblePlan:
    if n_coeffs < 1:
        raise ValueError("a TU has at least one coefficient")
    m = n_coeffs - 1
    draws = splitmix64_stream(seed, max(m - 1, 0) + m)
    perm = list(range(1, n_coeffs))
    shuffle = draws[:max(m - 1, 0)].tolist()
    for t, i in enumerate(range(m - 1, 0, -1)):
        j = shuffle[t] % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    signs = (draws[max(m - 1, 0):] & np.uint64(1)).astype(bool)
    p = np.array(perm, dtype=np.int64)
    p.setflags(write=False)
    signs.setflags(write=False)
    return TuScramblePlan(p, signs)


def _check(q, plan):
    q = np.asarray(q)
    if q.ndim != 1 or q.shape[0] != plan.n_coeffs:
        raise ValueError(f"plan covers {plan.n_coeffs} coefficients, TU has {q.shape}")
    return q


def scramble_tu(qcoeffs, plan: TuScramblePlan):
    q = _check(qcoeffs, plan)
    out = q.copy()
    out[1:] = q[plan.permutation]
    out[1:][plan.signs] *= -1
    return out


def unscramble_tu(qcoeffs, plan: TuScramblePlan):
    s = _check(qcoeffs, plan).copy()
    s[1:][plan.signs] *= -1
    out = s.copy()
    out[plan.permutation] = s[1:]
    return out


def plan_for(key: ScrambleKey, x: int, y: int, n_coeffs: int) -> TuScramblePlan:
    return make_plan(derive_tu_seed(key, x, y), n_coeffs)
