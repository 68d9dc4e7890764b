"""Shared Gaussian stream: addressing, determinism, layout and statistics."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from coreopt.errors import InvalidBudgetError, InvalidDimensionError, InvalidInputError
from coreopt.randomness import (GaussianStreamKey, forced_basis, gaussian_vector, round_basis,
                                round_bases)

M32 = 0xFFFFFFFF


def _philox_ref(ctr, key):
    """Plain-integer Philox4x32-10, written independently of the library."""
    c0, c1, c2, c3 = ctr
    k0, k1 = key
    for r in range(10):
        if r:
            k0, k1 = (k0 + 0x9E3779B9) & M32, (k1 + 0xBB67AE85) & M32
        p0, p1 = 0xD2511F53 * c0, 0xCD9E8D57 * c2
        c0, c1, c2, c3 = (p1 >> 32) ^ c1 ^ k0, p1 & M32, (p0 >> 32) ^ c3 ^ k1, p0 & M32
    return c0, c1, c2, c3


def _reference_vector(seed, rnd, j, d):
    """Documented layout, with scipy's inverse CDF standing in for the fixed rational one."""
    u = []
    for block in range((d + 1) // 2):
        o = _philox_ref((block, j, rnd & M32, rnd >> 32), (seed & M32, seed >> 32))
        for x in ((o[1] << 32) | o[0], (o[3] << 32) | o[2]):
            u.append(((x >> 12) + 0.5) * 2.0 ** -52)
    return stats.norm.ppf(np.array(u[:d]))


class TestGaussianStreamKey:
    def test_zero_dim_rejected(self):
        with pytest.raises(InvalidDimensionError):
            GaussianStreamKey(1, 0, 1, 0)

    @pytest.mark.parametrize("field,value", [("seed", -1), ("seed", 2 ** 64), ("round", 2 ** 64),
                                             ("vector_index", 2 ** 32)])
    def test_out_of_range_rejected(self, field, value):
        kw = dict(seed=0, round=0, vector_index=1, dim=4)
        kw[field] = value
        with pytest.raises(InvalidInputError):
            GaussianStreamKey(**kw)


class TestGaussianVector:
    def test_repeated_calls_identical(self):
        key = GaussianStreamKey(7, 3, 1, 16)
        assert gaussian_vector(key).tobytes() == gaussian_vector(key).tobytes()
        assert gaussian_vector(key).shape == (16,)

    def test_rounds_differ(self):
        a = gaussian_vector(GaussianStreamKey(7, 3, 1, 16))
        b = gaussian_vector(GaussianStreamKey(7, 4, 1, 16))
        assert np.any(a != b)

    @pytest.mark.parametrize("seed,rnd,j,d", [(7, 3, 1, 16), (0, 0, 1, 5),
                                              (2 ** 64 - 1, 2 ** 40 + 3, 2 ** 31, 9)])
    def test_matches_documented_layout(self, seed, rnd, j, d):
        got = gaussian_vector(GaussianStreamKey(seed, rnd, j, d))
        np.testing.assert_allclose(got, _reference_vector(seed, rnd, j, d), rtol=1e-13, atol=1e-15)

    def test_frozen_values(self):
        # regression anchor: first coordinates of (seed=7, round=3, j=1)
        got = gaussian_vector(GaussianStreamKey(7, 3, 1, 4))
        np.testing.assert_allclose(got, _reference_vector(7, 3, 1, 4), rtol=1e-13)
        assert got.tobytes() == round_basis(7, 3, 1, 4)[0].tobytes()

    @given(d1=st.integers(1, 30), d2=st.integers(1, 30))
    def test_prefix_property(self, d1, d2):
        a = gaussian_vector(GaussianStreamKey(3, 2, 1, d1))
        b = gaussian_vector(GaussianStreamKey(3, 2, 1, d2))
        k = min(d1, d2)
        assert a[:k].tobytes() == b[:k].tobytes()

    def test_moments_at_one_million(self):
        z = round_bases(11, np.arange(125_000), 1, 8).reshape(-1, 8)
        assert z.shape == (125_000, 8)
        z = np.concatenate([z, round_bases(12, np.arange(875_000), 1, 8).reshape(-1, 8)])
        assert np.all(np.abs(z.mean(axis=0)) <= 0.01)
        var = z.var(axis=0)
        assert np.all((var >= 0.98) & (var <= 1.02))

    def test_chi_square_goodness_of_fit(self):
        z = round_bases(5, np.arange(125_000), 1, 8).ravel()
        edges = stats.norm.ppf(np.linspace(0, 1, 51))
        counts, _ = np.histogram(z, bins=edges)
        res = stats.chisquare(counts)
        assert res.pvalue > 1e-3


class TestRoundBasis:
    def test_m1_is_gaussian_vector(self):
        np.testing.assert_array_equal(round_basis(5, 2, 1, 6)[0],
                                      gaussian_vector(GaussianStreamKey(5, 2, 1, 6)))

    def test_two_machines_agree(self):
        first = round_basis(5, 0, 3, 4)
        second = round_basis(5, 0, 3, 4)
        assert first.tobytes() == second.tobytes()

    def test_rows_are_vector_indices(self):
        B = round_basis(9, 4, 3, 7)
        for j in range(3):
            np.testing.assert_array_equal(B[j], gaussian_vector(GaussianStreamKey(9, 4, j + 1, 7)))

    def test_round_bases_stack(self):
        stack = round_bases(9, [4, 0, 17], 2, 5)
        for t, r in enumerate((4, 0, 17)):
            np.testing.assert_array_equal(stack[t], round_basis(9, r, 2, 5))

    def test_zero_budget_rejected(self):
        with pytest.raises(InvalidBudgetError):
            round_basis(0, 0, 0, 4)

    def test_gram_near_identity(self):
        B = round_basis(1, 0, 64, 4096) / np.sqrt(4096)
        G = B @ B.T
        off = G - np.diag(np.diag(G))
        assert np.max(np.abs(off)) <= 0.1

    def test_forced_basis_hook(self):
        with forced_basis([[1.0, 0.0]]):
            np.testing.assert_array_equal(round_basis(0, 0, 1, 2), [[1.0, 0.0]])
            with pytest.raises(InvalidDimensionError):
                round_basis(0, 0, 2, 2)
        assert np.any(round_basis(0, 0, 1, 2) != np.array([[1.0, 0.0]]))
