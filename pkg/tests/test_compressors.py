"""CORE sketches and the baseline compressors."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coreopt.compressors import (Compressor, CompressorState, DenseMessage, QuantizedMessage,
                                 Sketch, SparseMessage, core_compress, core_estimates,
                                 core_reconstruct, core_variance_bound, core_variance_closed_form,
                                 identity_compress, payload_floats, quantize_compress,
                                 topk_compress)
from coreopt.errors import (CorruptSketchError, InvalidBudgetError, InvalidInputError,
                            InvalidMatrixError)
from coreopt.randomness import forced_basis, round_basis

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestCoreCompress:
    def test_zero_vector(self):
        s = core_compress(np.zeros(5), 1, 0, 3)
        np.testing.assert_array_equal(s.coefficients, 0.0)
        assert s.wire_floats == 3

    def test_forced_basis_inner_product(self):
        with forced_basis([[1.0, 0.0]]):
            s = core_compress([2.0, 3.0], 0, 0, 1)
        np.testing.assert_array_equal(s.coefficients, [2.0])

    def test_matches_naive_dot_product(self):
        a = np.random.default_rng(3).standard_normal(8)
        basis = round_basis(4, 9, 3, 8)
        expected = []
        for xi in basis:
            acc = 0.0
            for ai, bi in zip(a.tolist(), xi.tolist()):
                acc += ai * bi
            expected.append(acc)
        assert core_compress(a, 4, 9, 3).coefficients.tolist() == expected

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            core_compress([1.0, np.nan], 0, 0, 1)

    def test_zero_budget_rejected(self):
        with pytest.raises(InvalidBudgetError):
            core_compress([1.0, 2.0], 0, 0, 0)


class TestCoreReconstruct:
    def test_zero_coefficients(self):
        s = Sketch(np.zeros(2), 0, 2, 4)
        np.testing.assert_array_equal(core_reconstruct(s, 0), np.zeros(4))

    def test_forced_round_trip(self):
        with forced_basis([[1.0, 0.0]]):
            est = core_reconstruct(core_compress([2.0, 3.0], 0, 0, 1), 0)
        np.testing.assert_array_equal(est, [2.0, 0.0])

    def test_budget_mismatch(self):
        with pytest.raises(CorruptSketchError):
            core_reconstruct(Sketch(np.zeros(3), 0, 2, 4), 0)

    def test_full_orthonormal_basis_is_exact(self):
        d = 6
        Q = np.linalg.qr(np.random.default_rng(0).standard_normal((d, d)))[0]
        a = np.arange(1.0, d + 1)
        with forced_basis(Q.T * math.sqrt(d)):
            est = core_reconstruct(core_compress(a, 0, 0, d), 0)
        np.testing.assert_allclose(est, a, rtol=1e-12)

    def test_batched_estimates_agree(self):
        a = np.array([1.0, 2.0, 0.0, -1.0])
        batch = core_estimates(a, 5, np.arange(4), 3)
        for r in range(4):
            single = core_reconstruct(core_compress(a, 5, r, 3), 5)
            np.testing.assert_allclose(batch[r], single, rtol=1e-12, atol=1e-14)

    @given(arrays(np.float64, 6, elements=finite), st.integers(0, 1000), st.integers(1, 5))
    def test_linearity(self, a, seed, m):
        s1 = core_reconstruct(core_compress(a, seed, 0, m), seed)
        s2 = core_reconstruct(core_compress(2.0 * a, seed, 0, m), seed)
        np.testing.assert_allclose(s2, 2.0 * s1, rtol=1e-12, atol=1e-9)

    def test_unbiased_small_sample(self):
        a = np.zeros(16)
        a[:2] = (1.0, 2.0)
        est = core_estimates(a, 0, np.arange(200_000), 4)
        se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
        assert np.all(np.abs(est.mean(axis=0) - a) <= 4 * se)


class TestVariance:
    def test_closed_form_example(self):
        assert core_variance_closed_form([1.0, 0.0], np.diag([2.0, 1.0]), 2) == 2.5

    def test_zero_vector(self):
        assert core_variance_closed_form(np.zeros(3), np.eye(3), 1) == 0.0

    @pytest.mark.parametrize("d", [1, 4, 16])
    def test_identity_unit_vector(self, d):
        a = np.zeros(d)
        a[0] = 1.0
        assert core_variance_closed_form(a, np.eye(d), 1) == d + 1
        assert core_variance_bound(a, np.eye(d), 1) == 3 * d - 1

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidMatrixError):
            core_variance_closed_form([1.0, 0.0], [[1.0, 1.0], [0.0, 1.0]], 1)

    @given(arrays(np.float64, 5, elements=finite), st.integers(0, 50), st.integers(1, 8))
    def test_closed_form_below_bound(self, a, seed, m):
        g = np.random.default_rng(seed).standard_normal((5, 5))
        A = g @ g.T
        exact = core_variance_closed_form(a, A, m)
        assert exact <= core_variance_bound(a, A, m) * (1 + 1e-12) + 1e-9

    def test_monte_carlo_example(self):
        a, A, m = np.array([1.0, 0.0]), np.diag([2.0, 1.0]), 2
        err = core_estimates(a, 1, np.arange(1_000_000), m) - a
        mc = float(np.mean(np.einsum("td,de,te->t", err, A, err)))
        assert abs(mc - 2.5) / 2.5 < 0.02


class TestTopK:
    def test_spec_example(self):
        msg, state = topk_compress(np.array([3.0, -1.0, 2.0]), 2, None)
        np.testing.assert_array_equal(msg.indices, [0, 2])
        np.testing.assert_array_equal(msg.values, [3.0, 2.0])
        np.testing.assert_array_equal(state.residual, [0.0, -1.0, 0.0])
        assert msg.wire_floats == 4

    def test_k_equals_d(self):
        a = np.array([1.0, -2.0, 0.5])
        msg, state = topk_compress(a, 3, None)
        np.testing.assert_array_equal(msg.decode(), a)
        np.testing.assert_array_equal(state.residual, 0.0)

    def test_ties_go_to_lower_index(self):
        msg, _ = topk_compress(np.array([1.0, -1.0, 1.0]), 1, None)
        np.testing.assert_array_equal(msg.indices, [0])

    def test_k_too_large(self):
        with pytest.raises(InvalidBudgetError):
            topk_compress(np.ones(3), 4, None)

    def test_every_coordinate_sent_within_d_rounds(self):
        # holds for equal magnitudes; smaller coordinates wait longer in general
        a = np.array([1.0, -1.0, 1.0, -1.0, 1.0])
        c = Compressor("topk", 5, k=1)
        sent = np.zeros(5, dtype=bool)
        for r in range(5):
            sent[c.compress(a, r).indices] = True
        assert sent.all()

    def test_cumulative_direction_converges(self):
        a = np.array([5.0, 1.0, 0.3, 0.2, 0.1])
        c = Compressor("topk", 5, k=1)
        total = np.zeros(5)
        T = 2000
        for r in range(T):
            total += c.decode(c.compress(a, r))
        # error feedback: the sent total lags the input by exactly the residual
        np.testing.assert_allclose(total + c.state.residual, T * a, rtol=1e-12)
        cos = total @ a / (np.linalg.norm(total) * np.linalg.norm(a))
        assert cos > 1 - 1e-4

    @given(arrays(np.float64, 7, elements=finite), st.integers(1, 7))
    def test_mass_conservation(self, a, k):
        msg, state = topk_compress(a, k, None)
        np.testing.assert_array_equal(msg.decode() + state.residual, a)

    def test_state_invariants(self):
        with pytest.raises(InvalidInputError):
            CompressorState("topk")
        with pytest.raises(InvalidInputError):
            CompressorState("quantize", residual=np.zeros(2))


class TestQuantize:
    def test_spec_example(self):
        msg = quantize_compress(np.array([2.0, -4.0]))
        assert msg.scale == 3.0
        np.testing.assert_array_equal(msg.decode(), [3.0, -3.0])

    def test_zero(self):
        msg = quantize_compress(np.zeros(3))
        assert msg.scale == 0.0
        np.testing.assert_array_equal(msg.decode(), 0.0)

    def test_constant_vector_exact(self):
        a = np.ones(4)
        assert np.linalg.norm(quantize_compress(a).decode() - a) == 0.0

    @pytest.mark.parametrize("d,floats", [(1, 2), (32, 2), (33, 3), (100, 5)])
    def test_wire_cost(self, d, floats):
        assert quantize_compress(np.ones(d)).wire_floats == floats


class TestWireFormat:
    @given(arrays(np.float64, 9, elements=finite), st.integers(1, 9), st.integers(0, 2 ** 40))
    def test_counts_match_codec(self, a, k, rnd):
        msgs = [core_compress(a, 3, rnd, k), topk_compress(a, k, None)[0], quantize_compress(a),
                identity_compress(a)]
        for msg in msgs:
            assert payload_floats(msg) == msg.wire_floats

    def test_round_trips(self):
        a = np.array([1.5, -2.0, 0.0, 4.25])
        s = core_compress(a, 1, 2 ** 33, 2)
        back = Sketch.from_bytes(s.to_bytes(), 4)
        assert back.round == s.round and back.budget_m == 2
        np.testing.assert_array_equal(back.coefficients, s.coefficients)
        sp = topk_compress(a, 2, None)[0]
        np.testing.assert_array_equal(SparseMessage.from_bytes(sp.to_bytes()).decode(), sp.decode())
        q = quantize_compress(a)
        np.testing.assert_array_equal(QuantizedMessage.from_bytes(q.to_bytes()).decode(), q.decode())
        dm = identity_compress(a)
        np.testing.assert_array_equal(DenseMessage.from_bytes(dm.to_bytes()).decode(), a)

    def test_sketch_layout(self):
        s = Sketch(np.array([1.0]), 5, 1, 3)
        assert s.to_bytes() == (5).to_bytes(8, "little") + (1).to_bytes(4, "little") + \
            np.float64(1.0).tobytes()

    def test_truncated_sketch(self):
        data = core_compress(np.ones(3), 0, 0, 2).to_bytes()[:-8]
        with pytest.raises(CorruptSketchError):
            Sketch.from_bytes(data, 3)


class TestCompressorInterface:
    @pytest.mark.parametrize("kind,kw", [("core", {"m": 2}), ("topk", {"k": 2}),
                                         ("quantize", {}), ("identity", {})])
    def test_decode_shape(self, kind, kw):
        c = Compressor(kind, 5, seed=1, **kw)
        out = c.decode(c.compress(np.arange(5.0), 3))
        assert out.shape == (5,)

    def test_unknown_kind(self):
        with pytest.raises(InvalidInputError):
            Compressor("zip", 3)

    def test_core_needs_budget(self):
        with pytest.raises(InvalidBudgetError):
            Compressor("core", 3)
