"""CORE sketching plus baseline compressors behind one interface.

Wire formats (little-endian). Framing headers are not charged; the charged
"float" count is the number of payload slots, one slot per f64 value, per
u64 index, or per u32 word of packed sign bits:

==========  ==========================================  ==============
message     layout                                      floats charged
==========  ==========================================  ==============
sketch      [round:u64][m:u32] [m x f64]                m
sparse      [d:u32][k:u32] [k x u64 index][k x f64]     2k
quantized   [d:u32] [scale:f64][ceil(d/32) x u32 bits]  1 + ceil(d/32)
dense       [d:u32] [d x f64]                           d
==========  ==========================================  ==============

Sign bit ``i`` of a quantized message is bit ``i % 32`` of word ``i // 32``;
a set bit means a negative coordinate.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (CorruptSketchError, InvalidBudgetError, InvalidDimensionError,
                     InvalidInputError, InvalidMatrixError)
from .randomness import round_basis, round_bases


def _as_finite_vector(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise InvalidDimensionError(f"expected a non-empty 1-d vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("input vector has non-finite coordinates")
    return a


# ---------------------------------------------------------------- messages

@dataclass(frozen=True)
class Sketch:
    coefficients: np.ndarray
    round: int
    budget_m: int
    dim: int

    @property
    def wire_floats(self):
        return self.budget_m

    def to_bytes(self):
        return (struct.pack("<QI", self.round, self.budget_m)
                + np.asarray(self.coefficients, dtype="<f8").tobytes())

    @classmethod
    def from_bytes(cls, data, dim):
        rnd, m = struct.unpack_from("<QI", data)
        coeffs = np.frombuffer(data, dtype="<f8", offset=12).astype(np.float64)
        if coeffs.size != m:
            raise CorruptSketchError(f"header says m={m} but payload holds {coeffs.size} floats")
        return cls(coeffs, rnd, m, dim)


@dataclass(frozen=True)
class SparseMessage:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    @property
    def wire_floats(self):
        return 2 * len(self.indices)

    def decode(self):
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def to_bytes(self):
        return (struct.pack("<II", self.dim, len(self.indices))
                + np.asarray(self.indices, dtype="<u8").tobytes()
                + np.asarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_bytes(cls, data):
        d, k = struct.unpack_from("<II", data)
        idx = np.frombuffer(data, dtype="<u8", count=k, offset=8).astype(np.int64)
        vals = np.frombuffer(data, dtype="<f8", count=k, offset=8 + 8 * k).astype(np.float64)
        return cls(idx, vals, d)


@dataclass(frozen=True)
class QuantizedMessage:
    scale: float
    sign_words: np.ndarray  # uint32, ceil(d/32) words
    dim: int

    @property
    def wire_floats(self):
        return 1 + len(self.sign_words)

    def negative_mask(self):
        bits = np.unpackbits(self.sign_words.astype("<u4").view(np.uint8), bitorder="little")
        return bits[:self.dim].astype(bool)

    def decode(self):
        return np.where(self.negative_mask(), -self.scale, self.scale)

    def to_bytes(self):
        return (struct.pack("<Id", self.dim, self.scale)
                + self.sign_words.astype("<u4").tobytes())

    @classmethod
    def from_bytes(cls, data):
        d, scale = struct.unpack_from("<Id", data)
        words = np.frombuffer(data, dtype="<u4", offset=12).astype(np.uint32)
        return cls(scale, words, d)


@dataclass(frozen=True)
class DenseMessage:
    values: np.ndarray

    @property
    def dim(self):
        return len(self.values)

    @property
    def wire_floats(self):
        return len(self.values)

    def decode(self):
        return np.array(self.values, dtype=np.float64)

    def to_bytes(self):
        return struct.pack("<I", self.dim) + np.asarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data):
        (d,) = struct.unpack_from("<I", data)
        return cls(np.frombuffer(data, dtype="<f8", count=d, offset=4).astype(np.float64))


_HEADER_BYTES = {Sketch: 12, SparseMessage: 8, QuantizedMessage: 4, DenseMessage: 4}


def payload_floats(message):
    """Charged float count recomputed from the encoded byte length."""
    payload = len(message.to_bytes()) - _HEADER_BYTES[type(message)]
    if isinstance(message, QuantizedMessage):
        return 1 + (payload - 8) // 4
    return payload // 8


# ---------------------------------------------------------------- CORE

def core_compress(a, seed, round, m):
    """Project ``a`` onto the round's m shared Gaussian vectors."""
    a = _as_finite_vector(a)
    basis = round_basis(seed, round, m, a.size)
    return Sketch(project(a[None, :], basis)[0], round, m, a.size)


def project(vectors, basis):
    """Inner products ``<vectors[i], basis[j]>`` with a fixed left-to-right summation order."""
    return kernels.dot_rows(vectors, basis)


def reconstruct_from_basis(coefficients, basis):
    """(1/m) * sum_j coefficients[j] * basis[j], summed in order of j.

    ``coefficients`` may be a single m-vector or an ``(r, m)`` stack.
    """
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.ndim == 1:
        return kernels.combine_rows(coefficients[None, :], basis)[0] / basis.shape[0]
    return kernels.combine_rows(coefficients, basis) / basis.shape[0]


def core_reconstruct(sketch, seed):
    """Unbiased estimate (1/m) sum_i p_i xi_i, regenerating xi from (seed, round)."""
    coeffs = np.asarray(sketch.coefficients, dtype=np.float64)
    if sketch.budget_m < 1 or coeffs.shape != (sketch.budget_m,):
        raise CorruptSketchError(
            f"sketch declares m={sketch.budget_m} but carries {coeffs.size} coefficients")
    basis = round_basis(seed, sketch.round, sketch.budget_m, sketch.dim)
    return reconstruct_from_basis(coeffs, basis)


def core_estimates(a, seed, rounds, m, chunk=4096):
    """Reconstructions of ``a`` for many rounds at once, shape ``(len(rounds), d)``.

    Batched form of ``core_reconstruct(core_compress(a, seed, r, m), seed)``
    for Monte-Carlo work; agrees with it to rounding error, not bit for bit.
    """
    a = _as_finite_vector(a)
    rounds = np.asarray(rounds, dtype=np.uint64)
    out = np.empty((len(rounds), a.size))
    for start in range(0, len(rounds), chunk):
        basis = round_bases(seed, rounds[start:start + chunk], m, a.size)
        coeffs = basis @ a
        out[start:start + len(basis)] = np.einsum("tm,tmd->td", coeffs, basis) / m
    return out


def _check_psd_symmetric(A, d):
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (d, d):
        raise InvalidMatrixError(f"matrix shape {A.shape} does not match dimension {d}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise InvalidMatrixError("matrix is not symmetric")
    return A


def core_variance_closed_form(a, A, m):
    """Exact E||a_tilde - a||_A^2 = (tr(A)||a||^2 + a^T A a) / m."""
    a = np.asarray(a, dtype=np.float64)
    A = _check_psd_symmetric(A, a.size)
    if m < 1:
        raise InvalidBudgetError(f"budget m must be >= 1, got {m}")
    return (np.trace(A) * (a @ a) + a @ A @ a) / m


def core_variance_bound(a, A, m):
    """Looser bound (3 tr(A)||a||^2 - a^T A a) / m."""
    a = np.asarray(a, dtype=np.float64)
    A = _check_psd_symmetric(A, a.size)
    if m < 1:
        raise InvalidBudgetError(f"budget m must be >= 1, got {m}")
    return (3.0 * np.trace(A) * (a @ a) - a @ A @ a) / m


# ---------------------------------------------------------------- baselines

@dataclass
class CompressorState:
    kind: str
    params: dict = field(default_factory=dict)
    residual: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("core", "topk", "quantize", "identity"):
            raise InvalidInputError(f"unknown compressor kind {self.kind!r}")
        if (self.residual is not None) != (self.kind == "topk"):
            raise InvalidInputError("residual must be present exactly for top-k state")

    @classmethod
    def topk(cls, k, dim):
        return cls("topk", {"k": k}, np.zeros(dim))


def topk_compress(a, k, state):
    """Send the k largest-magnitude coordinates of a + residual; keep the rest as residual.

    Ties in magnitude go to the lower index. Returns ``(message, new_state)``.
    """
    a = _as_finite_vector(a)
    d = a.size
    if not 1 <= k <= d:
        raise InvalidBudgetError(f"k must satisfy 1 <= k <= d={d}, got {k}")
    if state is None:
        state = CompressorState.topk(k, d)
    if state.residual.shape != (d,):
        raise InvalidDimensionError("residual dimension does not match input")
    acc = a + state.residual
    order = np.argsort(-np.abs(acc), kind="stable")
    idx = np.sort(order[:k])
    values = acc[idx]
    residual = acc.copy()
    residual[idx] = 0.0
    return SparseMessage(idx, values, d), CompressorState("topk", {"k": k}, residual)


def quantize_compress(a):
    """1-bit sign quantization with scale = mean |a|."""
    a = _as_finite_vector(a)
    scale = float(np.mean(np.abs(a)))
    nwords = -(-a.size // 32)
    bits = np.zeros(32 * nwords, dtype=np.uint8)
    bits[:a.size] = a < 0
    words = np.packbits(bits, bitorder="little").view("<u4").astype(np.uint32)
    return QuantizedMessage(scale, words, a.size)


def identity_compress(a):
    return DenseMessage(_as_finite_vector(a).copy())


class Compressor:
    """Stateful per-machine compressor with a uniform ``compress``/``decode`` surface.

    ``compress(a, round)`` returns a message exposing ``wire_floats`` and
    ``decode()``; CORE messages decode by regenerating the shared basis.
    """

    def __init__(self, kind, dim, seed=0, m=None, k=None):
        self.kind = kind
        self.dim = dim
        self.seed = seed
        if kind == "core":
            if m is None or m < 1:
                raise InvalidBudgetError("core compressor needs m >= 1")
            self.state = CompressorState("core", {"m": m})
        elif kind == "topk":
            if k is None or not 1 <= k <= dim:
                raise InvalidBudgetError(f"top-k compressor needs 1 <= k <= {dim}")
            self.state = CompressorState.topk(k, dim)
        elif kind in ("quantize", "identity"):
            self.state = CompressorState(kind)
        else:
            raise InvalidInputError(f"unknown compressor kind {kind!r}")

    def compress(self, a, round=0):
        if self.kind == "core":
            return core_compress(a, self.seed, round, self.state.params["m"])
        if self.kind == "topk":
            msg, self.state = topk_compress(a, self.state.params["k"], self.state)
            return msg
        if self.kind == "quantize":
            return quantize_compress(a)
        return identity_compress(a)

    def decode(self, message):
        if isinstance(message, Sketch):
            return core_reconstruct(message, self.seed)
        return message.decode()
