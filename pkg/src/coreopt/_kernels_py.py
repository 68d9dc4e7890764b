"""Pure numpy implementation of the Gaussian stream kernel.

Every arithmetic step mirrors ``_kernels.pyx`` one-for-one; the two are
required to agree bit-for-bit.
"""

import numpy as np

from . import _consts as C

BACKEND = "python"

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SHIFT12 = np.uint64(12)
# Bound the working set of one vectorized Philox pass (blocks).
_CHUNK_BLOCKS = 1 << 18


def _philox(c0, c1, c2, c3, k0, k1):
    m0 = np.uint64(C.PHILOX_M0)
    m1 = np.uint64(C.PHILOX_M1)
    w0 = np.uint64(C.PHILOX_W0)
    w1 = np.uint64(C.PHILOX_W1)
    for r in range(C.PHILOX_ROUNDS):
        if r:
            k0 = (k0 + w0) & _MASK32
            k1 = (k1 + w1) & _MASK32
        p0 = m0 * c0
        p1 = m1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _horner(coeffs, x):
    acc = np.full_like(x, coeffs[0])
    for c in coeffs[1:]:
        acc = acc * x + c
    return acc


def _log(x):
    mant, expo = np.frexp(x)
    low = mant < C.SQRT_HALF
    mant = np.where(low, mant * 2.0, mant)
    expo = np.where(low, expo - 1, expo).astype(np.float64)
    s = (mant - 1.0) / (mant + 1.0)
    poly = _horner(C.ATANH_SERIES, s * s)
    return expo * C.LN2 + 2.0 * s * poly


def _uniform_to_normal(u):
    q = u - 0.5
    out = np.empty_like(u)

    central = np.abs(q) <= C.CENTRAL_SPLIT
    if central.any():
        qc = q[central]
        r = C.CENTRAL_CONST - qc * qc
        out[central] = qc * _horner(C.CENTRAL_NUM, r) / _horner(C.CENTRAL_DEN, r)

    tails = ~central
    if tails.any():
        ut = u[tails]
        qt = q[tails]
        r = np.minimum(ut, 1.0 - ut)
        r = np.sqrt(-_log(r))
        mid = r <= C.TAIL_SPLIT
        val = np.empty_like(r)
        rm = r[mid] - C.INTERMEDIATE_SHIFT
        val[mid] = _horner(C.INTERMEDIATE_NUM, rm) / _horner(C.INTERMEDIATE_DEN, rm)
        rt = r[~mid] - C.TAIL_SPLIT
        val[~mid] = _horner(C.TAIL_NUM, rt) / _horner(C.TAIL_DEN, rt)
        out[tails] = np.where(qt < 0.0, -val, val)
    return out


def _bits_to_uniform(x):
    return ((x >> _SHIFT12).astype(np.float64) + 0.5) * C.UNIFORM_SCALE


def _fill(out, seed, rounds, indices, dim):
    k0 = np.uint64(seed & 0xFFFFFFFF)
    k1 = np.uint64(seed >> 32)
    nblocks = (dim + 1) // 2
    rows_per_chunk = max(1, _CHUNK_BLOCKS // nblocks)
    block = np.arange(nblocks, dtype=np.uint64)[None, :]
    for start in range(0, len(rounds), rows_per_chunk):
        rnd = rounds[start:start + rows_per_chunk, None]
        idx = indices[start:start + rows_per_chunk, None]
        shape = (len(rnd), nblocks)
        c0 = np.broadcast_to(block, shape)
        c1 = np.broadcast_to(idx, shape)
        c2 = np.broadcast_to(rnd & _MASK32, shape)
        c3 = np.broadcast_to(rnd >> _SHIFT32, shape)
        o0, o1, o2, o3 = _philox(c0, c1, c2, c3, k0, k1)
        u = np.empty((shape[0], 2 * nblocks))
        u[:, 0::2] = _bits_to_uniform((o1 << _SHIFT32) | o0)
        u[:, 1::2] = _bits_to_uniform((o3 << _SHIFT32) | o2)
        z = _uniform_to_normal(u.ravel()).reshape(u.shape)
        out[start:start + len(rnd)] = z[:, :dim]


def gaussian_rows(seed, rounds, indices, dim):
    """Return a ``(len(rounds), dim)`` array; row t is the stream (rounds[t], indices[t])."""
    rounds = np.ascontiguousarray(rounds, dtype=np.uint64)
    indices = np.ascontiguousarray(indices, dtype=np.uint64)
    out = np.empty((len(rounds), dim))
    if len(rounds) and dim:
        _fill(out, int(seed), rounds, indices, dim)
    return out


def normal_ppf(u):
    """Inverse standard-normal CDF used by the stream (exposed for testing)."""
    return _uniform_to_normal(np.asarray(u, dtype=np.float64).ravel()).reshape(np.shape(u))


def philox4x32(counter, key):
    """Raw Philox4x32-10 block for known-answer checks."""
    c = [np.uint64(v) for v in counter]
    out = _philox(*c, np.uint64(key[0]), np.uint64(key[1]))
    return tuple(int(v) for v in out)


def dot_rows(X, Y):
    """out[i, j] = sum_k X[i, k] * Y[j, k], accumulated strictly left to right."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if X.shape[1] == 0:
        return np.zeros((X.shape[0], Y.shape[0]))
    prod = X[:, None, :] * Y[None, :, :]
    return np.cumsum(prod, axis=2)[:, :, -1].copy()


def combine_rows(C, B):
    """out[i] = sum_j C[i, j] * B[j], accumulated in order j = 0, 1, ..."""
    C = np.ascontiguousarray(C, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    acc = C[:, 0:1] * B[0][None, :]
    for j in range(1, B.shape[0]):
        acc = acc + C[:, j:j + 1] * B[j][None, :]
    return acc
