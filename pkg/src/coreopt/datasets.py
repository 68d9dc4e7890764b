"""LibSVM-format ingestion and synthetic data generators.

LibSVM grammar accepted here (one sample per line)::

    line    := label (WS pair)* [WS] ['#' comment]
    pair    := index ':' value
    label   := float literal
    index   := positive decimal integer, strictly increasing within a line
    value   := finite float literal

Blank lines and lines whose first non-blank character is ``#`` are skipped.
Any other deviation raises :class:`LibsvmParseError` naming the 1-based line
and column of the offending token.
"""

import csv
import io
import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError, LibsvmParseError
from .objectives import QuadraticObjective

_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class LabeledDataset:
    """CSR-style sparse rows. ``indices`` are 1-based feature ids."""

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    dim: int
    normalized: bool = False

    @property
    def n_rows(self):
        return len(self.labels)

    def row(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def to_dense(self):
        out = np.zeros((self.n_rows, self.dim))
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        out[rows, self.indices - 1] = self.values
        return out

    def row_norms(self):
        """Euclidean row norms, scaled by each row's largest entry to avoid overflow."""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        peak = np.zeros(self.n_rows)
        np.maximum.at(peak, rows, np.abs(self.values))
        safe = np.where(peak > 0, peak, 1.0)
        scaled = self.values / safe[rows]
        sq = np.zeros(self.n_rows)
        np.add.at(sq, rows, scaled * scaled)
        return safe * np.sqrt(sq) * (peak > 0)

    def equals(self, other):
        return (self.dim == other.dim
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.labels, other.labels))


def _parse_float(text, line_no, col, what):
    try:
        v = float(text)
    except ValueError:
        raise LibsvmParseError(f"non-numeric {what} {text!r}", line_no, col) from None
    if not np.isfinite(v):
        raise LibsvmParseError(f"non-finite {what} {text!r}", line_no, col)
    return v


def parse_libsvm(stream, d=None):
    """Parse LibSVM text from a string or an iterable of lines."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    indptr, indices, values, labels = [0], [], [], []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0]
        tokens = list(_TOKEN.finditer(line))
        if not tokens:
            continue
        labels.append(_parse_float(tokens[0].group(), line_no, tokens[0].start() + 1, "label"))
        prev = 0
        for tok in tokens[1:]:
            col = tok.start() + 1
            idx_text, sep, val_text = tok.group().partition(":")
            if not sep:
                raise LibsvmParseError(f"expected index:value, got {tok.group()!r}", line_no, col)
            if not idx_text.isdigit():
                raise LibsvmParseError(f"non-numeric index {idx_text!r}", line_no, col)
            idx = int(idx_text)
            if idx < 1:
                raise LibsvmParseError("feature indices are 1-based", line_no, col)
            if idx <= prev:
                raise LibsvmParseError(f"index {idx} not ascending (previous {prev})", line_no, col)
            if d is not None and idx > d:
                raise LibsvmParseError(f"index {idx} exceeds dimension {d}", line_no, col)
            values.append(_parse_float(val_text, line_no, col + len(idx_text) + 1, "value"))
            indices.append(idx)
            prev = idx
        indptr.append(len(indices))
    dim = d if d is not None else (max(indices) if indices else 0)
    return LabeledDataset(np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
                          np.asarray(values, dtype=np.float64), np.asarray(labels, dtype=np.float64),
                          dim)


def load_libsvm(path, d=None):
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, d)


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2 ** 53 else repr(v)


def serialize(ds):
    """Render ``ds`` as LibSVM text; floats use shortest round-trip repr."""
    lines = []
    for i in range(ds.n_rows):
        idx, val = ds.row(i)
        pairs = " ".join(f"{j}:{_fmt(v)}" for j, v in zip(idx.tolist(), val.tolist()))
        lines.append(f"{_fmt(ds.labels[i])} {pairs}".rstrip())
    return "".join(line + "\n" for line in lines)


def normalize_rows(ds):
    """Scale every nonzero row to unit Euclidean norm; zero rows are left alone."""
    norms = ds.row_norms()
    scale = np.where(norms > 0, norms, 1.0)
    per_entry = np.repeat(scale, np.diff(ds.indptr))
    return LabeledDataset(ds.indptr, ds.indices, ds.values / per_entry, ds.labels, ds.dim, True)


def binarize(ds, threshold):
    """Map labels below ``threshold`` to -1 and the rest to +1."""
    labels = np.where(ds.labels < threshold, -1.0, 1.0)
    return LabeledDataset(ds.indptr, ds.indices, ds.values, labels, ds.dim, ds.normalized)


def subsample(ds, n_rows, seed):
    """Keep ``n_rows`` rows chosen without replacement by ``seed``, in original order."""
    if not 0 <= n_rows <= ds.n_rows:
        raise InvalidInputError(f"cannot keep {n_rows} of {ds.n_rows} rows")
    keep = np.sort(np.random.default_rng(seed).choice(ds.n_rows, n_rows, replace=False))
    counts = np.diff(ds.indptr)[keep]
    entries = np.concatenate([np.arange(ds.indptr[i], ds.indptr[i + 1]) for i in keep]) \
        if n_rows else np.zeros(0, dtype=np.int64)
    return LabeledDataset(np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
                          ds.indices[entries], ds.values[entries], ds.labels[keep],
                          ds.dim, ds.normalized)


def from_dense(X, labels):
    X = np.asarray(X, dtype=np.float64)
    rows, cols = np.nonzero(X)
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=X.shape[0]))])
    return LabeledDataset(indptr.astype(np.int64), cols.astype(np.int64) + 1, X[rows, cols],
                          np.asarray(labels, dtype=np.float64), X.shape[1])


# ---------------------------------------------------------------- synthetic

def synth_quadratic(spec, n_machines=1, heterogeneity=0.0, shard_seed=0):
    """Quadratic objective with exactly the declared spectrum, sharded over machines."""
    return QuadraticObjective(spec, n_machines, heterogeneity, shard_seed)


def synth_features(n_rows, d, decay=1.0, seed=0, normalize=True):
    """Rows drawn from N(0, diag(i**-decay)), optionally scaled to unit norm.

    Decaying feature covariance gives a Hessian trace far below d * L.
    """
    if n_rows < 1 or d < 1:
        raise InvalidDimensionError("n_rows and d must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, d)) * np.arange(1, d + 1) ** (-decay / 2.0)
    if normalize:
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X


def write_spectrum_csv(spec, fh):
    """CSV with header ``index,eigenvalue`` (1-based index, repr floats)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", "eigenvalue"])
    for i, lam in enumerate(spec.eigenvalues, start=1):
        w.writerow([i, repr(lam)])
