"""Shared Gaussian randomness that every simulated machine regenerates identically.

Stream layout
-------------
Each standard-normal vector is addressed by ``(seed, round, vector_index)``
and has ``dim`` coordinates. Bits come from Philox4x32-10 with

* key      = (seed & 0xFFFFFFFF, seed >> 32)
* counter  = (block, vector_index, round & 0xFFFFFFFF, round >> 32)

where ``block = coordinate // 2``. One Philox call yields four 32-bit words
``o0..o3``; coordinate ``2*block`` uses ``x = o1 << 32 | o0`` and coordinate
``2*block + 1`` uses ``x = o3 << 32 | o2``. The top 52 bits become
``u = ((x >> 12) + 0.5) * 2**-52`` in (0, 1), and the normal deviate is
Wichura's AS 241 rational approximation of the inverse CDF. The logarithm in
its tail branches is computed with ``frexp`` plus a fixed 12-term atanh series,
so no platform libm transcendental enters the result; only +, -, *, /, sqrt
and frexp are used, all of which are exactly specified by IEEE-754.

Equivalently, the 128-bit Philox counter is
``((round << 32 | vector_index) << 32) | block``.

Shared randomness is assumed, not simulated: Newman's theorem says private
coins plus O(log n) extra bits of communication suffice, but no such protocol
is provided here.
"""

import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidBudgetError, InvalidDimensionError, InvalidInputError

_U64 = 1 << 64
_U32 = 1 << 32

_forced = contextvars.ContextVar("forced_basis", default=None)


@dataclass(frozen=True)
class GaussianStreamKey:
    seed: int
    round: int
    vector_index: int
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidDimensionError(f"dim must be >= 1, got {self.dim}")
        if not 0 <= self.seed < _U64:
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0 <= self.round < _U64:
            raise InvalidInputError(f"round must be an unsigned 64-bit integer, got {self.round}")
        if not 0 <= self.vector_index < _U32:
            raise InvalidInputError(
                f"vector_index must be an unsigned 32-bit integer, got {self.vector_index}")
        if (self.dim + 1) // 2 > _U32:
            raise InvalidDimensionError("dim exceeds the 2**33 coordinates addressable per stream")


def gaussian_vector(key):
    """Return the standard-normal ``key.dim`` vector addressed by ``key``."""
    return kernels.gaussian_rows(key.seed, [key.round], [key.vector_index], key.dim)[0]


def _check(seed, round, m, d):
    if m < 1:
        raise InvalidBudgetError(f"budget m must be >= 1, got {m}")
    if m >= _U32:
        raise InvalidBudgetError(f"budget m must be < 2**32, got {m}")
    # validates seed, round and d
    GaussianStreamKey(seed, round, 1, d)


def round_basis(seed, round, m, d):
    """Return the ``(m, d)`` array whose rows are xi_1..xi_m for this round.

    Row ``j-1`` is ``gaussian_vector(GaussianStreamKey(seed, round, j, d))``.
    Inside a :func:`forced_basis` block the injected array is returned instead.
    """
    _check(seed, round, m, d)
    forced = _forced.get()
    if forced is not None:
        if forced.shape != (m, d):
            raise InvalidDimensionError(
                f"forced basis has shape {forced.shape}, expected {(m, d)}")
        return forced.copy()
    return kernels.gaussian_rows(seed, np.full(m, round, dtype=np.uint64),
                                 np.arange(1, m + 1, dtype=np.uint64), d)


def round_bases(seed, rounds, m, d):
    """Stack of ``round_basis`` for many rounds, shape ``(len(rounds), m, d)``.

    Used by Monte-Carlo checks that need many independent rounds at once.
    """
    rounds = np.asarray(rounds, dtype=np.uint64)
    _check(seed, 0, m, d)
    forced = _forced.get()
    if forced is not None:
        return np.broadcast_to(forced, (len(rounds), m, d)).copy()
    r = np.repeat(rounds, m)
    j = np.tile(np.arange(1, m + 1, dtype=np.uint64), len(rounds))
    return kernels.gaussian_rows(seed, r, j, d).reshape(len(rounds), m, d)


@contextlib.contextmanager
def forced_basis(basis):
    """Test hook: make ``round_basis`` return ``basis`` (shape ``(m, d)``) in this context."""
    token = _forced.set(np.array(basis, dtype=np.float64, ndmin=2))
    try:
        yield
    finally:
        _forced.reset(token)
