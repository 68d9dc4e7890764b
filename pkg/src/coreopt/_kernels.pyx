# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gaussian stream kernel: Philox4x32-10 bits -> AS 241 normals.

Operation order matches ``_kernels_py`` exactly; build with
``-ffp-contract=off`` so no fused multiply-adds change the rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport frexp, sqrt
from libc.stdint cimport uint32_t, uint64_t

from coreopt import _consts as C

cnp.import_array()

BACKEND = "cython"

cdef double CNUM[8]
cdef double CDEN[8]
cdef double INUM[8]
cdef double IDEN[8]
cdef double TNUM[8]
cdef double TDEN[8]
cdef double ATANH[12]

cdef int _i
for _i in range(8):
    CNUM[_i] = C.CENTRAL_NUM[_i]
    CDEN[_i] = C.CENTRAL_DEN[_i]
    INUM[_i] = C.INTERMEDIATE_NUM[_i]
    IDEN[_i] = C.INTERMEDIATE_DEN[_i]
    TNUM[_i] = C.TAIL_NUM[_i]
    TDEN[_i] = C.TAIL_DEN[_i]
for _i in range(12):
    ATANH[_i] = C.ATANH_SERIES[_i]

cdef double CENTRAL_SPLIT = C.CENTRAL_SPLIT
cdef double TAIL_SPLIT = C.TAIL_SPLIT
cdef double CENTRAL_CONST = C.CENTRAL_CONST
cdef double INTERMEDIATE_SHIFT = C.INTERMEDIATE_SHIFT
cdef double SQRT_HALF = C.SQRT_HALF
cdef double LN2 = C.LN2
cdef double UNIFORM_SCALE = C.UNIFORM_SCALE
cdef uint64_t M0 = C.PHILOX_M0
cdef uint64_t M1 = C.PHILOX_M1
cdef uint32_t W0 = C.PHILOX_W0
cdef uint32_t W1 = C.PHILOX_W1


cdef inline double _horner(const double* c, int n, double x) noexcept nogil:
    cdef double acc = c[0]
    cdef int i
    for i in range(1, n):
        acc = acc * x + c[i]
    return acc


cdef inline double _log(double x) noexcept nogil:
    cdef int e
    cdef double mant = frexp(x, &e)
    if mant < SQRT_HALF:
        mant = mant * 2.0
        e -= 1
    cdef double s = (mant - 1.0) / (mant + 1.0)
    cdef double poly = _horner(ATANH, 12, s * s)
    return (<double>e) * LN2 + 2.0 * s * poly


cdef inline double _ppf(double u) noexcept nogil:
    cdef double q = u - 0.5
    cdef double r, val
    if (q if q >= 0.0 else -q) <= CENTRAL_SPLIT:
        r = CENTRAL_CONST - q * q
        return q * _horner(CNUM, 8, r) / _horner(CDEN, 8, r)
    r = u if u < 1.0 - u else 1.0 - u
    r = sqrt(-_log(r))
    if r <= TAIL_SPLIT:
        r = r - INTERMEDIATE_SHIFT
        val = _horner(INUM, 8, r) / _horner(IDEN, 8, r)
    else:
        r = r - TAIL_SPLIT
        val = _horner(TNUM, 8, r) / _horner(TDEN, 8, r)
    return -val if q < 0.0 else val


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t c0 = c[0], c1 = c[1], c2 = c[2], c3 = c[3]
    cdef int r
    for r in range(10):
        if r:
            k0 = k0 + W0
            k1 = k1 + W1
        p0 = M0 * <uint64_t>c0
        p1 = M1 * <uint64_t>c2
        c0, c1, c2, c3 = (<uint32_t>(p1 >> 32)) ^ c1 ^ k0, <uint32_t>p1, (<uint32_t>(p0 >> 32)) ^ c3 ^ k1, <uint32_t>p0
    c[0] = c0
    c[1] = c1
    c[2] = c2
    c[3] = c3


cdef inline double _uniform(uint64_t x) noexcept nogil:
    return (<double>(x >> 12) + 0.5) * UNIFORM_SCALE


cdef void _fill_row(double* out, uint64_t seed, uint64_t rnd, uint64_t idx, Py_ssize_t dim) noexcept nogil:
    cdef uint32_t k0 = <uint32_t>seed
    cdef uint32_t k1 = <uint32_t>(seed >> 32)
    cdef uint32_t c[4]
    cdef Py_ssize_t b, nblocks = (dim + 1) // 2
    for b in range(nblocks):
        c[0] = <uint32_t>b
        c[1] = <uint32_t>idx
        c[2] = <uint32_t>rnd
        c[3] = <uint32_t>(rnd >> 32)
        _philox(c, k0, k1)
        out[2 * b] = _ppf(_uniform((<uint64_t>c[1] << 32) | c[0]))
        if 2 * b + 1 < dim:
            out[2 * b + 1] = _ppf(_uniform((<uint64_t>c[3] << 32) | c[2]))


def gaussian_rows(seed, rounds, indices, Py_ssize_t dim):
    """Return a ``(len(rounds), dim)`` array; row t is the stream (rounds[t], indices[t])."""
    cdef cnp.uint64_t[::1] rv = np.ascontiguousarray(rounds, dtype=np.uint64)
    cdef cnp.uint64_t[::1] iv = np.ascontiguousarray(indices, dtype=np.uint64)
    cdef Py_ssize_t n = rv.shape[0], t
    out = np.empty((n, dim))
    cdef double[:, ::1] ov = out
    cdef uint64_t s = seed
    if n == 0 or dim == 0:
        return out
    with nogil:
        for t in range(n):
            _fill_row(&ov[t, 0], s, rv[t], iv[t], dim)
    return out


def normal_ppf(u):
    """Inverse standard-normal CDF used by the stream (exposed for testing)."""
    arr = np.ascontiguousarray(u, dtype=np.float64)
    flat = arr.ravel()
    res = np.empty_like(flat)
    cdef double[::1] fv = flat
    cdef double[::1] rv = res
    cdef Py_ssize_t i
    for i in range(fv.shape[0]):
        rv[i] = _ppf(fv[i])
    return res.reshape(arr.shape)


def philox4x32(counter, key):
    """Raw Philox4x32-10 block for known-answer checks."""
    cdef uint32_t c[4]
    cdef int j
    for j in range(4):
        c[j] = counter[j]
    _philox(c, key[0], key[1])
    return (c[0], c[1], c[2], c[3])


def dot_rows(X, Y):
    """out[i, j] = sum_k X[i, k] * Y[j, k], accumulated strictly left to right."""
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t r = xv.shape[0], s = yv.shape[0], d = xv.shape[1], i, j, k
    out = np.zeros((r, s))
    cdef double[:, ::1] ov = out
    cdef double acc
    if d == 0:
        return out
    with nogil:
        for i in range(r):
            for j in range(s):
                acc = xv[i, 0] * yv[j, 0]
                for k in range(1, d):
                    acc = acc + xv[i, k] * yv[j, k]
                ov[i, j] = acc
    return out


def combine_rows(C, B):
    """out[i] = sum_j C[i, j] * B[j], accumulated in order j = 0, 1, ..."""
    cdef double[:, ::1] cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t r = cv.shape[0], m = bv.shape[0], d = bv.shape[1], i, j, k
    out = np.empty((r, d))
    cdef double[:, ::1] ov = out
    cdef double c
    with nogil:
        for i in range(r):
            c = cv[i, 0]
            for k in range(d):
                ov[i, k] = c * bv[0, k]
            for j in range(1, m):
                c = cv[i, j]
                for k in range(d):
                    ov[i, k] = ov[i, k] + c * bv[j, k]
    return out
