import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ercodes.channel import bpsk_demap, bpsk_modulate, pam4_levels, snr_convert, power_from_snr
from ercodes.ldpc import build_regular_ldpc, sum_product_decode
from ercodes.superpose import (ComponentCode, SuperpositionConfig, interference_estimate,
                               merge_message, sic_input_llrs, soft_sic_decode, split_message,
                               superpose_encode)

N = 256


@pytest.fixture(scope="module")
def codes():
    return build_regular_ldpc(N, 100, 3, seed=21), build_regular_ldpc(N, 140, 3, seed=22)


def make_cfg(codes, alpha, P=4.0, k1=100, k2=140, **kw):
    return SuperpositionConfig.from_split(codes[0] if k1 else None, codes[1] if k2 else None,
                                          k1, k2, P, alpha, seeds=(5, 6), **kw)


def random_messages(cfg, B, seed=0):
    return np.random.default_rng(seed).integers(0, 2, (B, cfg.k)).astype(np.uint8)


class TestMessages:
    def test_prefix_split(self, codes):
        cfg = SuperpositionConfig.from_split(None, codes[1], 0, 140, 1.0, 0.0)
        m1, m2 = split_message(np.ones(140, np.uint8), cfg)
        assert m1.size == 0 and m2.size == 140

    def test_k4_k1_1(self):
        pcm1, pcm2 = build_regular_ldpc(8, 4, 2), build_regular_ldpc(8, 4, 2, seed=1)
        cfg = SuperpositionConfig.from_split(pcm1, pcm2, 1, 3, 1.0, 0.5)
        m1, m2 = split_message([1, 0, 1, 1], cfg)
        assert m1.tolist() == [1] and m2.tolist() == [0, 1, 1]

    def test_round_trip(self, codes):
        cfg = make_cfg(codes, 0.3)
        for m in random_messages(cfg, 100, 1):
            assert np.array_equal(merge_message(*split_message(m, cfg)), m)

    def test_length_mismatch(self, codes):
        with pytest.raises(ValueError):
            split_message(np.zeros(5, np.uint8), make_cfg(codes, 0.3))


class TestConfig:
    def test_power_split_sums(self, codes):
        cfg = make_cfg(codes, 0.277, P=3.3)
        assert cfg.P1 + cfg.P2 == pytest.approx(3.3, abs=1e-12)
        assert cfg.with_power(7.0).P == pytest.approx(7.0, abs=1e-12)
        assert cfg.with_power(7.0).P1 / 7.0 == pytest.approx(0.277, rel=1e-12)

    def test_rejects_bad_alpha(self, codes):
        with pytest.raises(ValueError):
            make_cfg(codes, 1.2)

    def test_rejects_length_mismatch(self, codes):
        other = build_regular_ldpc(128, 64, 3)
        with pytest.raises(ValueError):
            SuperpositionConfig((ComponentCode(100, codes[0], 1, N), ComponentCode(64, other, 2, 128)),
                                1.0, 1.0)

    def test_rejects_too_many_bits(self, codes):
        with pytest.raises(ValueError):
            ComponentCode(200, codes[0], 1, N)


class TestEncode:
    def test_pam4_alphabet(self, codes):
        P = 2.6
        cfg = make_cfg(codes, 0.2, P=P)
        x = superpose_encode(random_messages(cfg, 8), cfg)
        assert np.allclose(np.unique(np.round(x, 12)), np.sort(pam4_levels(P)), rtol=0, atol=1e-12)
        lv = np.sort(np.unique(np.round(np.abs(x), 12)))
        assert lv[1] / lv[0] == pytest.approx(3.0, rel=1e-12)

    def test_alphabet_and_power(self, codes):
        cfg = make_cfg(codes, 0.35, P=5.0)
        x = superpose_encode(random_messages(cfg, 200, 2), cfg)
        a, b = np.sqrt(cfg.P1), np.sqrt(cfg.P2)
        assert np.all(np.isclose(x ** 2, (a + b) ** 2) | np.isclose(x ** 2, (a - b) ** 2))
        # mean of c^2 over uniform signs: P1 + P2 (cross term averages out)
        assert np.mean(x ** 2) == pytest.approx(5.0, rel=0.01)

    def test_p1_zero_is_scaled_bpsk(self, codes):
        cfg = make_cfg(codes, 0.0, P=3.0, k1=0)
        m = random_messages(cfg, 4, 3)
        code2 = cfg.codes[1]
        expected = bpsk_modulate(code2.interleave(code2.encode(m)), 3.0)
        assert np.array_equal(superpose_encode(m, cfg), expected)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_interleaver_round_trip(self, seed):
        code = ComponentCode(50, build_regular_ldpc(64, 50, 2, seed=1), seed % 1000, 64)
        x = np.random.default_rng(seed).normal(size=(3, 64))
        assert np.array_equal(code.deinterleave(code.interleave(x)), x)
        assert np.array_equal(code.interleave(code.deinterleave(x)), x)


class TestSic:
    def test_first_pass_is_tin(self, codes):
        P1, P2 = 1.1, 2.9
        for j, Pj in ((0, P1), (1, P2)):
            rho, p_int = interference_estimate(np.zeros((2, N)), Pj)
            assert not rho.any() and np.all(p_int == Pj)
        cfg = make_cfg(codes, 0.275, P=4.0, outer_iters=1)
        y = np.random.default_rng(0).normal(size=(3, N))
        state = soft_sic_decode(y, cfg)[2]
        # the first pass of layer 1 sees the full power of layer 2 as noise
        assert np.all(state.history[0]["interference_1"] == cfg.P2)

    def test_tin_input_llrs(self):
        y = np.random.default_rng(1).normal(size=N)
        P1, P2, s2 = 1.0, 3.0, 0.5
        got = sic_input_llrs(y, 0.0, P2, P1, s2)
        sinr = P1 / (s2 + P2)
        assert np.allclose(got, 2 * y * sinr / np.sqrt(P1), rtol=1e-13, atol=0)

    def test_oracle_interference(self):
        rng = np.random.default_rng(2)
        s = 1 - 2.0 * rng.integers(0, 2, (2, N))
        P2 = 2.5
        gamma = 60.0 * s  # saturated at the true signs
        rho, p_int = interference_estimate(gamma, P2)
        assert np.all(p_int == 0.0)
        assert np.array_equal(rho, np.sqrt(P2) * s)
        y = rng.normal(size=(2, N)) + rho
        P1, s2 = 0.8, 1.0
        assert np.array_equal(sic_input_llrs(y, rho, p_int, P1, s2), bpsk_demap(y - rho, P1, s2))

    @pytest.mark.parametrize("outer", [1, 3])
    def test_degenerate_split_matches_single_code(self, codes, outer):
        cfg = make_cfg(codes, 0.0, P=2.2, k1=0, outer_iters=outer, inner_iters=15)
        code2 = cfg.codes[1]
        rng = np.random.default_rng(3)
        m = random_messages(cfg, 16, 4)
        y = superpose_encode(m, cfg) + rng.standard_normal((16, N))
        m1, m2, state, conv = soft_sic_decode(y, cfg, 1.0)
        direct = sum_product_decode(code2.deinterleave(bpsk_demap(y, 2.2, 1.0)), code2.pcm, 15)
        assert m1.shape == (16, 0)
        assert np.array_equal(code2.deinterleave(state.gamma[1]), direct.llrs)
        assert np.array_equal(m2, code2.message(direct.llrs))
        assert np.array_equal(conv[1], direct.converged)

    def test_interference_bounds(self, codes):
        cfg = make_cfg(codes, 0.3, P=power_from_snr(3.0, N, 240, "EbN0_dB"), outer_iters=6,
                       inner_iters=10)
        rng = np.random.default_rng(5)
        y = superpose_encode(random_messages(cfg, 32, 6), cfg) + rng.standard_normal((32, N))
        state = soft_sic_decode(y, cfg)[2]
        for rec in state.history:
            assert np.all((rec["interference_1"] >= 0) & (rec["interference_1"] <= cfg.P2))
            assert np.all((rec["interference_2"] >= 0) & (rec["interference_2"] <= cfg.P1))

    def test_noiseless_decoding(self, codes):
        cfg = make_cfg(codes, 0.3, P=4.0)
        m = random_messages(cfg, 8, 7)
        m1, m2, _, conv = soft_sic_decode(superpose_encode(m, cfg), cfg, 1e-6)
        assert np.array_equal(merge_message(m1, m2), m)
        assert conv[0].all() and conv[1].all()

    def test_single_frame_matches_batch(self, codes):
        cfg = make_cfg(codes, 0.3, P=4.0, outer_iters=4, inner_iters=8)
        rng = np.random.default_rng(8)
        y = superpose_encode(random_messages(cfg, 3, 9), cfg) + rng.standard_normal((3, N))
        batch = soft_sic_decode(y, cfg)
        one = soft_sic_decode(y[1], cfg)
        assert np.array_equal(one[0], batch[0][1]) and np.array_equal(one[1], batch[1][1])
        assert np.array_equal(one[2].gamma[0], batch[2].gamma[0][1])

    def test_jacobi_and_immediate_commit_differ_only_in_schedule(self, codes):
        kw = dict(P=4.0, outer_iters=1, inner_iters=10)
        rng = np.random.default_rng(10)
        cfg = make_cfg(codes, 0.3, **kw)
        y = superpose_encode(random_messages(cfg, 4, 11), cfg) + rng.standard_normal((4, N))
        jac = soft_sic_decode(y, cfg)[2]
        imm = soft_sic_decode(y, make_cfg(codes, 0.3, immediate_commit=True, **kw))[2]
        # layer 1 is decoded first in both schedules; only layer 2 sees layer 1's fresh output
        assert np.array_equal(jac.gamma[0], imm.gamma[0])
        assert np.all(jac.history[0]["interference_2"] == cfg.P1)
        assert np.all(imm.history[0]["interference_2"] < cfg.P1)

    def test_wrong_length(self, codes):
        with pytest.raises(ValueError):
            soft_sic_decode(np.zeros(10), make_cfg(codes, 0.3))

    def test_net_refinement(self):
        # mean |gamma| after the last outer pass exceeds the first pass in most frames when
        # FER < 0.5 (per-pass monotonicity does not hold under the commit-after-both schedule)
        n, k = 2048, 1890
        pcm1, pcm2 = build_regular_ldpc(n, 843, 3, seed=11), build_regular_ldpc(n, k - 843, 3, seed=12)
        P = power_from_snr(4.25, n, k, "EbN0_dB")
        cfg = SuperpositionConfig.from_split(pcm1, pcm2, 843, k - 843, P, 0.277, seeds=(101, 202))
        rng = np.random.default_rng(12)
        B = 40
        m = rng.integers(0, 2, (B, k)).astype(np.uint8)
        y = superpose_encode(m, cfg) + rng.standard_normal((B, n))
        m1, m2, state, _ = soft_sic_decode(y, cfg)
        assert np.mean(np.any(merge_message(m1, m2) != m, axis=1)) < 0.5
        assert snr_convert(P, n, k, "EbN0_dB") == pytest.approx(4.25)
        for ell in (1, 2):
            g = np.array([rec[f"mean_abs_gamma_{ell}"] for rec in state.history])
            assert np.mean(g[-1] >= g[0]) >= 0.9
