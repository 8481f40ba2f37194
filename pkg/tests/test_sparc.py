import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ercodes.channel import power_from_snr
from ercodes.sparc import (MAX_ML_CANDIDATES, DesignMatrix, DesignMatrixSpec, SparcParams,
                           amp_decode, amp_denoise, bits_to_indices, design_column,
                           indices_to_bits, ml_objective, ml_oracle_decode, section_argmax,
                           sparc_encode, sparc_hard_decision)


def make(M, L, n, P=1.0, seed=0, storage="materialized"):
    params = SparcParams(M, L, n, (P / L,) * L, seed)
    return params, DesignMatrix(params.design(storage))


class TestParams:
    def test_uniform_allocation_sums_to_P(self):
        p = SparcParams.uniform(5540, 1024, 6000, 3.3)
        assert p.L == 554 and p.k == 5540
        assert sum(p.power_alloc) == pytest.approx(3.3, rel=1e-12)
        assert np.allclose(p.power_alloc, 3.3 / 554, rtol=1e-15)

    def test_reduced_last_section(self):
        p = SparcParams.uniform(5540, 256, 6000, 1.0)
        # 5540 = 692 * 8 + 4: one extra section of 2**4 columns
        assert p.L == 693 and p.last_section_size == 16 and p.k == 5540
        assert p.n_columns == 692 * 256 + 16

    def test_desk_scale_sections(self):
        assert SparcParams.uniform(1890, 64, 2048, 1.0).L == 315
        p = SparcParams.uniform(1890, 256, 2048, 1.0)
        assert (p.L, p.last_section_size) == (237, 4)
        assert p.rate == pytest.approx(1890 / 2048)

    @pytest.mark.parametrize("M", [1, 3, 6])
    def test_bad_M(self, M):
        with pytest.raises(ValueError):
            SparcParams(M, 2, 16, (0.5, 0.5))

    def test_with_power_rescales(self):
        p = SparcParams.uniform(12, 4, 32, 1.0).with_power(5.0)
        assert p.P == pytest.approx(5.0, rel=1e-12)


class TestDesign:
    def test_column_determinism_and_storage_agreement(self):
        spec = DesignMatrixSpec(64, 8, 4, seed=9)
        a = design_column(spec, 17)
        assert np.array_equal(a, design_column(spec, 17))
        lazy = DesignMatrix(DesignMatrixSpec(64, 8, 4, seed=9, storage="on_demand"), block=5)
        full = DesignMatrix(spec)
        assert np.array_equal(lazy.columns([17])[0], a)
        rng = np.random.default_rng(0)
        b = rng.normal(size=32)
        z = rng.normal(size=64)
        assert np.allclose(lazy.matvec(b), full.matvec(b), rtol=1e-12, atol=1e-12)
        assert np.allclose(lazy.rmatvec(z), full.rmatvec(z), rtol=1e-12, atol=1e-12)

    def test_out_of_range_column(self):
        with pytest.raises((IndexError, ValueError)):
            design_column(DesignMatrixSpec(8, 4, 2, 0), 8)

    def test_moments(self):
        n = 512
        spec = DesignMatrixSpec(n, 256, 1, seed=1)
        A = np.stack([design_column(spec, j) for j in range(200)])  # 102400 entries
        m = A.size
        assert abs(A.mean()) < 4 * np.sqrt(1 / n / m)
        assert A.var() == pytest.approx(1 / n, rel=0.02)

    def test_column_correlation_is_small(self):
        n = 4096
        spec = DesignMatrixSpec(n, 4, 1, seed=2)
        a, b = design_column(spec, 0), design_column(spec, 1)
        corr = a @ b / np.sqrt((a @ a) * (b @ b))
        assert abs(corr) < 5 / np.sqrt(n)

    def test_matvec_against_dense(self):
        params, A = make(4, 3, 20, seed=5)
        dense = np.stack([design_column(params.design(), j) for j in range(12)], axis=1)
        b = np.arange(12.0)
        assert np.allclose(A.matvec(b), dense @ b)
        assert np.allclose(A.rmatvec(np.ones(20)), dense.T @ np.ones(20))


class TestEncode:
    def test_smallest_instance(self):
        params, A = make(2, 1, 16, P=2.0)
        sv, c = sparc_encode([0], params, A)
        assert sv.indices.tolist() == [0]
        assert np.allclose(c, np.sqrt(16 * 2.0) * design_column(params.design(), 0))

    def test_big_endian_indices(self):
        params, A = make(4, 2, 8)
        sv, _ = sparc_encode([1, 0, 0, 1], params, A)
        assert sv.indices.tolist() == [2, 1]

    def test_length_mismatch(self):
        params, A = make(4, 2, 8)
        with pytest.raises(ValueError):
            sparc_encode([1, 0, 0], params, A)

    @given(st.data())
    @settings(max_examples=50)
    def test_bits_index_round_trip(self, data):
        M = data.draw(st.sampled_from([2, 4, 16, 256]))
        k = data.draw(st.integers(1, 40))
        params = SparcParams.uniform(k, M, 64, 1.0)
        bits = np.array(data.draw(st.lists(st.integers(0, 1), min_size=k, max_size=k)))
        idx = bits_to_indices(bits, params)
        assert np.all(idx < params.section_sizes)
        assert np.array_equal(indices_to_bits(idx, params), bits)

    def test_section_vector_invariants(self):
        params, A = make(8, 5, 40, P=3.0)
        sv, _ = sparc_encode(np.random.default_rng(1).integers(0, 2, 15), params, A)
        b = sv.dense().reshape(5, 8)
        assert np.all(np.count_nonzero(b, axis=1) == 1)
        assert np.allclose(b.sum(axis=1), np.sqrt(40 * 3.0 / 5))

    def test_batch_matches_single(self):
        params, A = make(4, 6, 32)
        bits = np.random.default_rng(2).integers(0, 2, (5, 12))
        idx, c = sparc_encode(bits, params, A)
        for i in range(5):
            sv, ci = sparc_encode(bits[i], params, A)
            assert np.array_equal(idx[i], sv.indices)
            assert np.allclose(ci, c[i])

    def test_average_power(self):
        n = 2048
        params = SparcParams.uniform(1890, 64, n, 2.0, seed=3)
        A = DesignMatrix(params.design())
        rng = np.random.default_rng(3)
        energy = []
        for _ in range(20):  # 1000 messages in batches of 50
            _, c = sparc_encode(rng.integers(0, 2, (50, params.k)), params, A)
            energy.append(np.sum(c * c, axis=1))
        assert np.mean(energy) / n == pytest.approx(2.0, rel=0.05)


class TestDenoiser:
    @staticmethod
    def _state(rng, params, tau):
        """AMP-like effective observation: true section vector plus N(0, tau) noise."""
        idx = rng.integers(0, params.section_sizes)
        b = np.zeros(params.n_columns)
        b[params.offsets[:-1] + idx] = params.amplitudes
        return b + np.sqrt(tau) * rng.standard_normal(params.n_columns)

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_section_sums_and_bounds(self, seed):
        rng = np.random.default_rng(seed)
        params = SparcParams.uniform(int(rng.integers(2, 30)), 8, 50, float(rng.uniform(0.1, 10)))
        tau = float(rng.uniform(0.5, 5))
        eta = amp_denoise(self._state(rng, params, tau), tau, params)
        sums = np.add.reduceat(eta, params.offsets[:-1])
        assert np.allclose(sums, params.amplitudes, rtol=1e-9, atol=0)
        assert np.all(eta > 0) and np.all(eta < params.column_amplitudes)

    def test_saturated_states_stay_inside_open_range(self):
        # logit gaps far beyond double precision
        rng = np.random.default_rng(0)
        params = SparcParams.uniform(30, 8, 50, 10.0)
        s = rng.normal(0, 3, params.n_columns)
        eta = amp_denoise(s, 0.01, params)
        assert np.all(np.isfinite(eta))
        assert np.all(eta > 0) and np.all(eta < params.column_amplitudes)
        assert np.allclose(np.add.reduceat(eta, params.offsets[:-1]), params.amplitudes, rtol=1e-9)

    def test_matches_direct_formula(self):
        params = SparcParams(4, 2, 10, (0.5, 1.5))
        s = np.array([0.1, -0.3, 0.7, 0.2, 1.0, 0.0, -1.0, 0.5])
        tau = 0.8
        out = amp_denoise(s, tau, params)
        for l in range(2):
            a = np.sqrt(10 * params.power_alloc[l])
            e = np.exp(s[4 * l: 4 * l + 4] * a / tau)
            assert np.allclose(out[4 * l: 4 * l + 4], a * e / e.sum(), rtol=1e-13)

    def test_large_inputs_do_not_overflow(self):
        params = SparcParams(4, 1, 100, (1000.0,))
        out = amp_denoise(np.array([1e3, 0.0, 0.0, 0.0]), 1e-6, params)
        assert np.all(np.isfinite(out)) and out[0] == pytest.approx(np.sqrt(1e5))


class TestAmp:
    def test_first_iteration_has_no_onsager_term(self):
        params, A = make(4, 3, 24, P=2.0, seed=4)
        y = np.random.default_rng(0).normal(size=24)
        st1 = amp_decode(y, A, params, T=1)
        assert np.array_equal(st1.z, y)
        assert st1.tau_sq == pytest.approx(y @ y / 24)
        assert np.allclose(st1.b_est, amp_denoise(A.rmatvec(y), y @ y / 24, params))

    def test_second_iteration_matches_hand_computation(self):
        params, A = make(4, 3, 24, P=2.0, seed=4)
        y = np.random.default_rng(1).normal(size=24)
        z0, tau0 = y, y @ y / 24
        b1 = amp_denoise(A.rmatvec(z0), tau0, params)
        z1 = y - A.matvec(b1) + z0 / tau0 * (2.0 - b1 @ b1 / 24)
        tau1 = z1 @ z1 / 24
        b2 = amp_denoise(A.rmatvec(z1) + b1, tau1, params)
        st2 = amp_decode(y, A, params, T=2)
        assert np.allclose(st2.z, z1, rtol=1e-12)
        assert np.allclose(st2.b_est, b2, rtol=1e-10)
        assert int(st2.t) == 2

    def test_noiseless_small_code(self):
        params, A = make(2, 2, 512, P=1.0, seed=6)
        rng = np.random.default_rng(7)
        bits = rng.integers(0, 2, (1000, 2))
        _, c = sparc_encode(bits, params, A)
        dec = sparc_hard_decision(amp_decode(c, A, params, T=10), params)
        assert np.sum(np.all(dec == bits, axis=1)) >= 999

    def test_noiseless_round_trip(self):
        params, A = make(4, 8, 1024, P=1.0, seed=8)
        bits = np.random.default_rng(9).integers(0, 2, (100, 16))
        _, c = sparc_encode(bits, params, A)
        assert np.array_equal(sparc_hard_decision(amp_decode(c, A, params, T=20), params), bits)

    def test_batch_equals_single(self):
        params, A = make(8, 4, 48, P=4.0, seed=1)
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, (3, 12))
        _, c = sparc_encode(bits, params, A)
        y = c + rng.normal(size=c.shape)
        batch = amp_decode(y, A, params, T=7)
        for i in range(3):
            single = amp_decode(y[i], A, params, T=7)
            assert np.allclose(single.b_est, batch.b_est[i], rtol=1e-12, atol=1e-12)

    def test_early_stop_stops_once_stable(self):
        params, A = make(4, 8, 1024, P=1.0, seed=8)
        bits = np.random.default_rng(9).integers(0, 2, (4, 16))
        _, c = sparc_encode(bits, params, A)
        st_ = amp_decode(c, A, params, T=50, early_stop=True)
        assert np.all(st_.t < 50)
        assert np.array_equal(sparc_hard_decision(st_, params), bits)

    def test_tau_decreases_above_threshold(self):
        params = SparcParams.uniform(96, 16, 160, power_from_snr(8.0, 160, 96, "EsN0_dB"), seed=2)
        A = DesignMatrix(params.design())
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, 96)
        _, c = sparc_encode(bits, params, A)
        st_ = amp_decode(c + rng.normal(size=160), A, params, T=25)
        hist = np.array(st_.tau_history)
        assert hist[-1] < hist[0]
        assert hist[-1] > 1.0 - 0.3  # residual variance does not fall far below the noise

    def test_dimension_mismatch(self):
        params, A = make(4, 2, 16)
        with pytest.raises(ValueError):
            amp_decode(np.zeros(15), A, params)
        with pytest.raises(ValueError):
            amp_decode(np.zeros(16), A, params, T=0)


class TestHardDecision:
    def test_ties_go_to_lowest_index(self):
        params = SparcParams(4, 2, 8, (0.5, 0.5))
        assert section_argmax(np.ones(8), params).tolist() == [0, 0]

    def test_single_section_peak(self):
        params = SparcParams(4, 1, 8, (1.0,))
        assert sparc_hard_decision(np.array([0.1, 0.2, 0.3, 0.9]), params).tolist() == [1, 1]


class TestMlOracle:
    def test_noiseless_recovers_b(self):
        params, A = make(4, 3, 24, P=1.0, seed=3)
        sv, c = sparc_encode([1, 1, 0, 1, 0, 0], params, A)
        assert np.array_equal(ml_oracle_decode(c, A, params).indices, sv.indices)

    def test_matches_brute_force_objective(self):
        params, A = make(2, 4, 12, P=2.0, seed=5)
        y = np.random.default_rng(0).normal(size=12)
        best = min(((ml_objective(y, A, params, idx), idx) for idx in np.ndindex(2, 2, 2, 2)))
        got = ml_oracle_decode(y, A, params, chunk=3)
        assert tuple(got.indices) == best[1]

    def test_refuses_large_instances(self):
        params = SparcParams(1024, 3, 16, (1.0, 1.0, 1.0))
        assert 1024**3 > MAX_ML_CANDIDATES
        with pytest.raises(ValueError):
            ml_oracle_decode(np.zeros(16), DesignMatrix(params.design("on_demand")), params)
