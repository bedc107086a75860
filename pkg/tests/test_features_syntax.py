import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import textured
from ssv.codec import code_picture, count_stages, encode
from ssv.features import (SyntaxFeaturizer, bitstream_features, build_feature_image, map_bn,
                          map_ipm, map_pus)
from ssv.scramble import ScrambleKey
from ssv.syntax import PuRecord, SyntaxMap, bench_csv, bench_decode, parse_syntax

KEY = ScrambleKey(0x0123456789ABCDEF)


class TestMappings:
    def test_ipm(self):
        assert (map_ipm(0), map_ipm(34), map_ipm(17), map_ipm(1)) == (0, 255, 128, 8)
        with pytest.raises(ValueError):
            map_ipm(35)

    @given(st.integers(0, 34))
    def test_ipm_formula(self, m):
        v = m * 255 / 34
        assert map_ipm(m) == int(np.floor(v + 0.5))

    def test_pus(self):
        assert [map_pus(s) for s in (4, 8, 16, 32)] == [0, 85, 170, 255]
        with pytest.raises(ValueError):
            map_pus(64)

    def test_bn(self):
        assert map_bn(10, 10, 30) == 0
        assert map_bn(20, 10, 30) == 128
        assert map_bn(30, 10, 30) == 255
        assert map_bn(7, 7, 7) == 0
        assert map_bn(np.array([7, 7]), 7, 7).tolist() == [0, 0]


class TestFeatureImage:
    def test_single_pu(self):
        img = build_feature_image(SyntaxMap(32, 32, 30, [PuRecord(0, 0, 32, 1, 40)]))
        assert img.shape == (32, 32, 3) and img.dtype == np.uint8
        assert (img[..., 0] == 8).all() and (img[..., 1] == 255).all()
        assert (img[..., 2] == 0).all()  # one PU: degenerate BN range

    def test_mid_grey_pus_plane_is_255(self):
        bs = encode(np.full((64, 64), 128, np.uint8), 32)
        assert (bitstream_features(bs)[..., 1] == 255).all()

    def test_bad_tiling_rejected(self):
        with pytest.raises(ValueError):
            build_feature_image(SyntaxMap(32, 32, 30, [PuRecord(0, 0, 16, 0, 9)]))

    def test_constant_inside_each_pu(self):
        bs = encode(textured(2), 27)
        smap = parse_syntax(bs)
        f = build_feature_image(smap)
        for r in smap.records:
            block = f[r.y:r.y + r.size, r.x:r.x + r.size].reshape(-1, 3)
            assert (block == block[0]).all()
        bns = [r.bn for r in smap.records]
        assert f[..., 2].max() == 255 and f[..., 2].min() == 0 and min(bns) < max(bns)

    def test_scrambling_leaves_ipm_and_pus_planes(self):
        for s in range(4):
            img = textured(s)
            plain = bitstream_features(encode(img, 32))
            scr = bitstream_features(encode(img, 32, KEY))
            np.testing.assert_array_equal(plain[..., :2], scr[..., :2])

    def test_featurizer_estimator(self):
        streams = [encode(textured(s), 32) for s in range(2)]
        f = SyntaxFeaturizer()
        out = f.fit_transform([streams[0], streams[1].to_bytes()])
        assert out.shape == (2, 64, 64, 3)
        np.testing.assert_array_equal(out[0], bitstream_features(streams[0]))
        assert f.get_params() == {}


class TestSyntax:
    @pytest.mark.parametrize("mode", ["raw", "adaptive"])
    def test_leaves_match_encoder(self, mode):
        for s in range(4):
            img = textured(s)
            leaves, _ = code_picture(img, 27)
            smap = parse_syntax(encode(img, 27, entropy_mode=mode))
            assert [(r.x, r.y, r.size, r.ipm) for r in smap.records] == \
                [(c.x, c.y, c.size, c.ipm) for c in leaves]
            assert sum(r.size ** 2 for r in smap.records) == 64 * 64
            assert all(r.bn >= 7 for r in smap.records)

    def test_raw_bn_total_is_payload_bit_length(self):
        bs = encode(textured(1), 22, entropy_mode="raw")
        total = sum(r.bn for r in parse_syntax(bs).records)
        assert (total + 7) // 8 == len(bs.payload)
        # padding bits after the last bin are zero
        assert total == len(bs.payload) * 8 or bs.payload[-1] & ((1 << (8 - total % 8)) - 1) == 0

    def test_bn_independent_of_entropy_mode(self):
        img = textured(4)
        a = parse_syntax(encode(img, 27, entropy_mode="raw")).records
        b = parse_syntax(encode(img, 27, entropy_mode="adaptive")).records
        assert a == b

    def test_scrambled_syntax_needs_no_key(self):
        img = textured(5)
        p = parse_syntax(encode(img, 32)).records
        s = parse_syntax(encode(img, 32, KEY)).records
        assert [r[:4] for r in p] == [r[:4] for r in s]

    def test_scrambling_does_not_lower_mean_bn(self):
        plain = scr = 0
        for s in range(6):
            img = textured(s)
            plain += np.mean([r.bn for r in parse_syntax(encode(img, 27)).records])
            scr += np.mean([r.bn for r in parse_syntax(encode(img, 27, KEY)).records])
        assert scr >= plain

    def test_syntax_path_skips_reconstruction(self):
        bs = encode(textured(0), 22, KEY)
        with count_stages() as seen:
            parse_syntax(bs)
        assert seen["entropy_decode"] == 1
        for stage in ("inverse_transform", "dequantize", "prediction", "reconstruction",
                      "picture_alloc"):
            assert seen[stage] == 0

    def test_csv_round_trip(self):
        smap = parse_syntax(encode(textured(1), 32))
        text = smap.to_csv()
        assert text.splitlines()[0] == "x,y,size,ipm,bn"
        assert SyntaxMap.from_csv(text, smap.width, smap.height, smap.qp) == smap
        with pytest.raises(ValueError):
            SyntaxMap.from_csv("a,b\n1,2\n", 32, 32, 30)


class TestBench:
    def test_empty_corpus(self):
        assert bench_decode([]) == []
        assert bench_csv([]) == "image,full_s,syntax_s,ratio\n"

    def test_rows(self):
        rows = bench_decode([("a", encode(textured(0), 32))])
        assert len(rows) == 1 and rows[0].image == "a"
        assert rows[0].full_s > 0 and rows[0].syntax_s > 0
        assert rows[0].ratio == pytest.approx(rows[0].full_s / rows[0].syntax_s)
        assert bench_csv(rows).count("\n") == 2
