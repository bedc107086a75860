import numpy as np
import pytest

from ssv.codec.intra import (ANGLE, INV_ANGLE, InvalidModeError, gather_refs, intra_predict,
                             predict_all)


def oracle_predict(mode, refs, s):
    """Per-sample planar/DC/angular formulas on p[x][y] style references."""
    log2 = s.bit_length() - 1
    p = {}
    for y in range(2 * s):
        p[(-1, y)] = int(refs[2 * s - 1 - y])
    p[(-1, -1)] = int(refs[2 * s])
    for x in range(2 * s):
        p[(x, -1)] = int(refs[2 * s + 1 + x])
    out = np.zeros((s, s), dtype=np.int64)
    if mode == 0:
        for y in range(s):
            for x in range(s):
                out[y, x] = ((s - 1 - x) * p[(-1, y)] + (x + 1) * p[(s, -1)]
                             + (s - 1 - y) * p[(x, -1)] + (y + 1) * p[(-1, s)] + s) >> (log2 + 1)
        return out
    if mode == 1:
        dc = (sum(p[(x, -1)] for x in range(s)) + sum(p[(-1, y)] for y in range(s)) + s) >> (log2 + 1)
        out[:] = dc
        return out
    ang = ANGLE[mode - 2]
    ref = {}
    if mode >= 18:
        for x in range(s + 1):
            ref[x] = p[(-1 + x, -1)]
        if ang < 0:
            if (s * ang) >> 5 < -1:
                for x in range((s * ang) >> 5, 0):
                    ref[x] = p[(-1, -1 + ((x * INV_ANGLE[mode] + 128) >> 8))]
        else:
            for x in range(s + 1, 2 * s + 1):
                ref[x] = p[(-1 + x, -1)]
        for y in range(s):
            idx, fact = ((y + 1) * ang) >> 5, ((y + 1) * ang) & 31
            for x in range(s):
                if fact:
                    out[y, x] = ((32 - fact) * ref[x + idx + 1] + fact * ref[x + idx + 2] + 16) >> 5
                else:
                    out[y, x] = ref[x + idx + 1]
    else:
        for x in range(s + 1):
            ref[x] = p[(-1, -1 + x)]
        if ang < 0:
            if (s * ang) >> 5 < -1:
                for x in range((s * ang) >> 5, 0):
                    ref[x] = p[(-1 + ((x * INV_ANGLE[mode] + 128) >> 8), -1)]
        else:
            for x in range(s + 1, 2 * s + 1):
                ref[x] = p[(-1, -1 + x)]
        for x in range(s):
            idx, fact = ((x + 1) * ang) >> 5, ((x + 1) * ang) & 31
            for y in range(s):
                if fact:
                    out[y, x] = ((32 - fact) * ref[y + idx + 1] + fact * ref[y + idx + 2] + 16) >> 5
                else:
                    out[y, x] = ref[y + idx + 1]
    return out


@pytest.mark.parametrize("size", [4, 8, 16, 32])
def test_every_mode_matches_per_sample_formulas(size):
    rng = np.random.default_rng(size)
    for trial in range(3):
        refs = rng.integers(0, 256, 4 * size + 1)
        if trial == 0:
            refs[:] = 255  # largest products
        allp = predict_all(refs, size)
        for mode in range(35):
            want = oracle_predict(mode, refs, size)
            np.testing.assert_array_equal(intra_predict(mode, refs, size), want)
            np.testing.assert_array_equal(allp[mode], want)


def test_flat_references_predict_flat_in_every_mode():
    refs = np.full(33, 77)
    assert (predict_all(refs, 8) == 77).all()


def test_pure_vertical_and_horizontal_copy_edges():
    s = 8
    refs = np.arange(4 * s + 1)
    top = refs[2 * s + 1:3 * s + 1]
    left = refs[2 * s - 1:s - 1:-1]
    assert (intra_predict(26, refs, s) == top[None, :]).all()
    assert (intra_predict(10, refs, s) == left[:, None]).all()


@pytest.mark.parametrize("bad", [-1, 35, 2.0, "3"])
def test_invalid_mode(bad):
    with pytest.raises(InvalidModeError):
        intra_predict(bad, np.zeros(17), 4)


def test_reference_count_checked():
    with pytest.raises(ValueError):
        intra_predict(0, np.zeros(16), 4)


class TestGatherRefs:
    def test_nothing_available_gives_mid_grey(self):
        recon = np.zeros((32, 32), dtype=np.int64)
        avail = np.zeros((32, 32), dtype=bool)
        assert (gather_refs(recon, avail, 0, 0, 8) == 128).all()

    def test_substitution_scan(self):
        # block at (4, 4) size 4: left column and corner available, top-right row missing
        recon = np.arange(64, dtype=np.int64).reshape(8, 8)
        avail = np.zeros((8, 8), dtype=bool)
        avail[:, :4] = True   # left half reconstructed
        avail[:4, 4:8] = True  # top row above the block, columns 4..7
        refs = gather_refs(recon, avail, 4, 4, 4)
        # left column rows 7..4 (below-left rows 8..11 lie outside the picture)
        below_left_first = recon[7, 3]
        assert list(refs[:4]) == [below_left_first] * 4
        assert list(refs[4:8]) == [recon[7, 3], recon[6, 3], recon[5, 3], recon[4, 3]]
        assert refs[8] == recon[3, 3]
        assert list(refs[9:13]) == list(recon[3, 4:8])
        # top-right beyond the picture copies the last available top sample
        assert list(refs[13:17]) == [recon[3, 7]] * 4

    def test_all_available_reads_neighbours(self):
        recon = np.arange(1024, dtype=np.int64).reshape(32, 32) % 251
        avail = np.ones((32, 32), dtype=bool)
        refs = gather_refs(recon, avail, 8, 8, 4)
        assert refs[8] == recon[7, 7]
        assert list(refs[9:17]) == list(recon[7, 8:16])
        assert list(refs[7::-1]) == list(recon[8:16, 7])
