"""Objective families: values, gradients, sharding, trace bounds and domination."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coreopt.errors import InvalidDimensionError, InvalidShardError, InvalidSpectrumError
from coreopt.objectives import (LINKS, QuadraticObjective, RidgeSeparableObjective, SpectrumSpec,
                                TwoLayerObjective, effective_dimension, haar_rotation,
                                hessian_dominated_check)


def finite_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def ridge(link="logistic", N=60, d=5, alpha=0.1, n=1, seed=0):
    g = np.random.default_rng(seed)
    B = g.standard_normal((N, d))
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    y = np.where(g.standard_normal(N) > 0, 1.0, -1.0) if link == "logistic" else g.standard_normal(N)
    return RidgeSeparableObjective(B, y, link, alpha, n, shard_seed=seed)


class TestSpectrumSpec:
    def test_inverse_square_trace(self):
        spec = SpectrumSpec.power_decay(3)
        assert spec.trace == pytest.approx(49 / 36, abs=1e-15)
        assert spec.L == 1.0 and spec.mu == 1 / 9

    def test_shift_makes_last_eigenvalue_mu(self):
        spec = SpectrumSpec.power_decay(200, 2.0, mu=1e-3)
        assert spec.mu == 1e-3
        assert spec.L == pytest.approx(1 + 1e-3 - 200 ** -2.0, rel=1e-15)

    def test_partial_sum_oracle(self):
        spec = SpectrumSpec.power_decay(200)
        assert abs(spec.trace - math.fsum(i ** -2.0 for i in range(1, 201))) <= 1e-9

    @pytest.mark.parametrize("lam", [(1.0, -0.5), (0.5, 1.0), (), (1.0, math.nan)])
    def test_invalid(self, lam):
        with pytest.raises(InvalidSpectrumError):
            SpectrumSpec(lam)

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=30))
    def test_effective_dimension_inequalities(self, values):
        spec = SpectrumSpec(tuple(sorted(values, reverse=True)))
        d = spec.dim
        assert spec.trace <= d * spec.L * (1 + 1e-12)
        assert spec.sqrt_eigen_sum <= math.sqrt(d) * math.sqrt(spec.trace) * (1 + 1e-12) + 1e-12


class TestQuadratic:
    def test_value_and_grad(self):
        q = QuadraticObjective(SpectrumSpec((2.0, 1.0)))
        assert q.value([1.0, 1.0]) == 1.5
        np.testing.assert_array_equal(q.grad([1.0, 1.0]), [2.0, 1.0])
        assert q.f_star == 0.0

    def test_one_dimensional(self):
        q = QuadraticObjective(SpectrumSpec((1.0,)))
        assert q.value([3.0]) == 4.5

    def test_rotation_preserves_spectrum(self):
        spec = SpectrumSpec.power_decay(50, rotation_seed=4)
        A = QuadraticObjective(spec).matrix
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(A))[::-1], spec.array, atol=1e-12)
        other = QuadraticObjective(SpectrumSpec.power_decay(50, rotation_seed=5)).matrix
        assert not np.allclose(A, other)

    def test_recovered_eigenvalues_300(self):
        spec = SpectrumSpec.power_decay(300, 1.5, rotation_seed=1)
        ev = np.sort(np.linalg.eigvalsh(QuadraticObjective(spec).matrix))[::-1]
        np.testing.assert_allclose(ev, spec.array, atol=1e-8)

    def test_haar_is_orthogonal(self):
        U = haar_rotation(20, 3)
        np.testing.assert_allclose(U @ U.T, np.eye(20), atol=1e-12)

    @pytest.mark.parametrize("h", [0.0, 0.5, 0.9])
    def test_shards_average_to_global(self, h):
        q = QuadraticObjective(SpectrumSpec.power_decay(12, rotation_seed=2), 5, h, shard_seed=1)
        x = np.random.default_rng(0).standard_normal(12)
        np.testing.assert_allclose(q.local_grads(x).mean(axis=0), q.grad(x), atol=1e-14)
        H = np.mean([q.local_hessian(i) for i in range(5)], axis=0)
        np.testing.assert_allclose(H, q.matrix, atol=1e-14)
        assert np.mean([q.local_value(i, x) for i in range(5)]) == pytest.approx(q.value(x))

    def test_local_grads_at(self):
        q = QuadraticObjective(SpectrumSpec.power_decay(6, rotation_seed=2), 3, 0.5)
        X = np.random.default_rng(1).standard_normal((3, 6))
        G = q.local_grads_at(X)
        for i in range(3):
            np.testing.assert_allclose(G[i], q.local_grad(i, X[i]), atol=1e-14)

    def test_strong_convexity(self, rng):
        q = QuadraticObjective(SpectrumSpec.power_decay(30, mu=1e-2, rotation_seed=0))
        for _ in range(50):
            x, y = rng.standard_normal(30), rng.standard_normal(30)
            lower = q.value(x) + q.grad(x) @ (y - x) + 0.5 * q.mu * np.sum((y - x) ** 2)
            assert q.value(y) >= lower - 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            QuadraticObjective(SpectrumSpec((1.0, 1.0))).grad([1.0])

    def test_bad_shard_count(self):
        with pytest.raises(InvalidShardError):
            QuadraticObjective(SpectrumSpec((1.0,)), 0)


class TestRidgeSeparable:
    def test_single_row_square_loss(self):
        obj = RidgeSeparableObjective([[1.0, 0.0]], None, "square_loss", 0.0)
        np.testing.assert_array_equal(obj.grad([3.0, 5.0]), [3.0, 0.0])

    def test_logistic_balanced_at_zero(self):
        B = np.array([[1.0, 2.0], [1.0, 2.0], [-0.5, 1.0], [-0.5, 1.0]])
        obj = RidgeSeparableObjective(B, [1.0, -1.0, 1.0, -1.0], "logistic", 0.3)
        np.testing.assert_allclose(obj.grad(np.zeros(2)), 0.0, atol=1e-16)

    @pytest.mark.parametrize("link", sorted(LINKS))
    def test_gradient_matches_finite_differences(self, link, rng):
        obj = ridge(link)
        for _ in range(20):
            x = rng.standard_normal(obj.dim)
            fd = finite_difference(obj.value, x)
            g = obj.grad(x)
            assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))

    @pytest.mark.parametrize("link", sorted(LINKS))
    def test_hessian_matches_gradient_differences(self, link, rng):
        obj = ridge(link, d=4)
        x = rng.standard_normal(4)
        H = np.stack([finite_difference(lambda z: obj.grad(z)[i], x) for i in range(4)])
        np.testing.assert_allclose(obj.hessian(x), H, atol=1e-6)

    def test_trace_bound_formula(self):
        B = np.full((3, 4), math.sqrt(0.5))  # ||beta||^2 = 2
        obj = RidgeSeparableObjective(B, None, "square_loss", 0.1, R=2.0)
        assert obj.trace_bound() == pytest.approx(2.4, rel=1e-15)

    def test_logistic_curvature_constant(self):
        t = np.linspace(-10, 10, 200001)
        _, _, dds = LINKS["logistic"][0](t, np.ones_like(t))
        assert np.max(dds) == pytest.approx(0.25, abs=1e-9)
        obj = RidgeSeparableObjective([[1.0, 0.0, 0.0]], [1.0], "logistic", 0.0, R=1.0)
        assert obj.trace_bound() == 0.25

    @pytest.mark.parametrize("link", sorted(LINKS))
    def test_hessian_trace_below_bound(self, link, rng):
        obj = ridge(link, d=6, alpha=0.2)
        bound = obj.trace_bound()
        for _ in range(100):
            x = 3 * rng.standard_normal(6)
            assert np.trace(obj.hessian(x)) <= bound * (1 + 1e-12)

    def test_logistic_dominated(self, rng):
        obj = ridge("logistic", d=6)
        pts = [rng.standard_normal(6) for _ in range(100)]
        assert hessian_dominated_check(obj, pts, obj.dominating_matrix()).ok

    def test_shards_average_to_global(self, rng):
        obj = ridge("logistic", N=100, d=8, n=5, seed=3)
        assert sorted(np.concatenate(obj.shards).tolist()) == list(range(100))
        for _ in range(10):
            x = rng.standard_normal(8)
            assert np.max(np.abs(obj.local_grads(x).mean(axis=0) - obj.grad(x))) <= 1e-12
            assert np.mean([obj.local_value(i, x) for i in range(5)]) == pytest.approx(obj.value(x))

    def test_single_shard_is_global(self, rng):
        obj = ridge("square_loss", n=1)
        x = rng.standard_normal(obj.dim)
        np.testing.assert_allclose(obj.local_grads(x)[0], obj.grad(x), rtol=1e-14, atol=1e-16)

    def test_too_many_shards(self):
        with pytest.raises(InvalidShardError):
            ridge(N=4, n=5)

    def test_f_star_estimate(self):
        obj = ridge("square_loss", alpha=0.5)
        fs = obj.estimate_f_star()
        x_star = np.linalg.solve(obj.hessian(np.zeros(obj.dim)), obj.betas.T @ obj.labels / obj.n_rows)
        assert fs == pytest.approx(obj.value(x_star), abs=1e-12)


class TestTwoLayer:
    def test_gradient(self, rng):
        obj = TwoLayerObjective(rng.standard_normal(3), 4, "tanh")
        theta = rng.standard_normal(obj.dim)
        np.testing.assert_allclose(obj.grad(theta), finite_difference(obj.value, theta), atol=1e-7)

    @pytest.mark.parametrize("activation", ["softplus", "tanh"])
    def test_hessian_and_trace(self, activation, rng):
        obj = TwoLayerObjective(rng.standard_normal(3), 2, activation)
        theta = rng.standard_normal(obj.dim)
        H = np.stack([finite_difference(lambda z: obj.grad(z)[i], theta) for i in range(obj.dim)])
        np.testing.assert_allclose(obj.hessian(theta), H, atol=1e-6)
        assert obj.hessian_trace(theta) == pytest.approx(np.trace(obj.hessian(theta)), abs=1e-12)

    def test_width_one_bound(self, rng):
        # entries in [-1, 1] keep ||x||_2^2 <= ||x||_1, which the bound relies on
        for _ in range(200):
            x = rng.uniform(-1, 1, 4)
            obj = TwoLayerObjective(x, 1, "softplus", r2=2.0)
            theta = rng.standard_normal(obj.dim)
            _, w = obj.unpack(theta)
            theta[-1:] = w / max(1.0, np.linalg.norm(w) / 2.0)
            assert obj.hessian_trace(theta) <= obj.trace_bound() + 1e-12

    def test_stated_bound_fails_for_wider_networks(self):
        # x = e_1 gives r1 = 1; equal hidden units make the trace exceed alpha r1 r2
        obj = TwoLayerObjective(np.array([1.0, 0.0]), 4, "softplus", r2=1.0)
        W = np.zeros((2, 4))
        w = np.full(4, 0.5)  # ||w|| = 1
        theta = np.concatenate([W.ravel(), w])
        assert obj.hessian_trace(theta) > obj.trace_bound()
        assert obj.hessian_trace(theta) <= obj.valid_trace_bound()

    def test_valid_bound_sampled(self, rng):
        for h in (1, 3, 8):
            obj = TwoLayerObjective(rng.standard_normal(3), h, "tanh", r2=1.5)
            for _ in range(50):
                theta = rng.standard_normal(obj.dim)
                W, w = obj.unpack(theta)
                theta[obj.p * h:] = w * 1.5 / np.linalg.norm(w)
                assert abs(obj.hessian_trace(theta)) <= obj.valid_trace_bound() + 1e-12


class TestDiagnostics:
    def test_own_matrix_dominates(self):
        q = QuadraticObjective(SpectrumSpec.power_decay(5, rotation_seed=1))
        assert hessian_dominated_check(q, [np.zeros(5)], q.matrix).ok

    def test_shrunken_matrix_fails(self):
        q = QuadraticObjective(SpectrumSpec.power_decay(5))
        res = hessian_dominated_check(q, [np.zeros(5)], q.matrix - 1e-3 * np.eye(5))
        assert not res.ok and res.violating_point is not None

    def test_effective_dimension(self):
        q = QuadraticObjective(SpectrumSpec.power_decay(10))
        rep = effective_dimension(q)
        assert rep.exact and rep.r1 == q.trace
        obj = ridge("logistic", d=4)
        rep = effective_dimension(obj, [np.zeros(4)])
        assert not rep.exact and rep.r1 <= obj.trace_bound() * (1 + 1e-12)
