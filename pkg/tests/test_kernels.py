"""Compiled and numpy kernels: Philox known answers and bit-for-bit agreement."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from coreopt import _kernels_py, kernels

compiled = pytest.importorskip("coreopt._kernels", reason="compiled kernel not built")

BACKENDS = [_kernels_py, compiled]

# Published Philox4x32-10 known-answer vectors (Random123 kat_vectors).
PHILOX_KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF),
     (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


class TestPhilox:
    @pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.BACKEND)
    @pytest.mark.parametrize("counter,key,expected", PHILOX_KAT)
    def test_known_answers(self, backend, counter, key, expected):
        assert backend.philox4x32(counter, key) == expected


class TestNormalPpf:
    @pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.BACKEND)
    def test_matches_scipy(self, backend):
        u = np.concatenate([np.linspace(1e-12, 1 - 1e-12, 20001), [2.0 ** -53, 1e-300, 0.5]])
        np.testing.assert_allclose(backend.normal_ppf(u), stats.norm.ppf(u), rtol=1e-13, atol=1e-15)

    def test_symmetry(self):
        u = np.arange(1, 2 ** 19 + 1) / 2.0 ** 20  # dyadic, so 1 - u is exact
        np.testing.assert_array_equal(kernels.normal_ppf(u), -kernels.normal_ppf(1.0 - u))

    def test_median_is_zero(self):
        assert kernels.normal_ppf(np.array([0.5]))[0] == 0.0


class TestBackendAgreement:
    @given(seed=st.integers(0, 2 ** 64 - 1), rnd=st.integers(0, 2 ** 64 - 1),
           j=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 67))
    def test_gaussian_rows_bitwise(self, seed, rnd, j, d):
        r = np.array([rnd], dtype=np.uint64)
        i = np.array([j], dtype=np.uint64)
        a = _kernels_py.gaussian_rows(seed, r, i, d)
        b = compiled.gaussian_rows(seed, r, i, d)
        assert a.tobytes() == b.tobytes()

    @given(n=st.integers(1, 6), m=st.integers(1, 6), d=st.integers(1, 40), seed=st.integers(0, 99))
    def test_dot_and_combine_bitwise(self, n, m, d, seed):
        g = np.random.default_rng(seed)
        X, Y, C = g.standard_normal((n, d)), g.standard_normal((m, d)), g.standard_normal((n, m))
        assert _kernels_py.dot_rows(X, Y).tobytes() == compiled.dot_rows(X, Y).tobytes()
        assert _kernels_py.combine_rows(C, Y).tobytes() == compiled.combine_rows(C, Y).tobytes()

    def test_dot_rows_sums_left_to_right(self):
        X = np.array([[1e16, 1.0, -1e16]])
        Y = np.ones((1, 3))
        # (1e16 + 1) rounds to 1e16, so strict left-to-right order gives 0
        for backend in BACKENDS:
            assert backend.dot_rows(X, Y)[0, 0] == 0.0

    def test_selected_backend_is_compiled(self):
        assert kernels.BACKEND == "cython"
