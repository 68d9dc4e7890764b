"""Differential-privacy checks for the released CORE coefficients.

The released scalars for a vector ``a`` are ``C(a) = (<a, xi_1>, ..., <a, xi_m>)``,
distributed as ``N(0, ||a||^2 I_m)``. For adjacent vectors ``a`` (the reference)
and ``b`` with ``||a - b|| <= delta1 ||a||`` the privacy loss of an observation
``p`` is the log-likelihood ratio under ``sigma1 = ||a||`` and ``sigma2 = ||b||``.

Monte-Carlo checks can only falsify a bound. A passing report therefore says
the sample is *consistent with* the bound, not that the bound is proven.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .errors import DegenerateInputError, InsufficientSamplesError, InvalidInputError
from .randomness import round_bases

MIN_TRIALS = 1000
# Rounds per generator call when sampling sketches.
_CHUNK = 4096


def privacy_loss(sigma1, sigma2, p_norm_sq, m):
    """(||p||^2 / 2)(1/sigma2^2 - 1/sigma1^2) + m ln(sigma2 / sigma1); works on arrays of p_norm_sq."""
    if not (sigma1 > 0 and sigma2 > 0):
        raise InvalidInputError("sigma1 and sigma2 must be positive")
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    p_norm_sq = np.asarray(p_norm_sq, dtype=np.float64)
    if np.any(p_norm_sq < 0):
        raise InvalidInputError("p_norm_sq must be nonnegative")
    out = 0.5 * p_norm_sq * (1.0 / sigma2 ** 2 - 1.0 / sigma1 ** 2) + m * math.log(sigma2 / sigma1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DpParams:
    delta1: float
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.delta1 < 0.1:
            raise InvalidInputError("delta1 must lie in [0, 0.1)")
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError("delta must lie in (0, 1)")

    @property
    def epsilon(self):
        """20 * delta1 * ln(1/delta)."""
        return 20.0 * self.delta1 * math.log(1.0 / self.delta)


@dataclass(frozen=True)
class AdjacentPair:
    """``a`` is the reference: adjacency is ||a - b|| <= delta1 ||a||, which is not symmetric."""

    a: np.ndarray
    b: np.ndarray
    delta1: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise InvalidInputError("a and b must be vectors of equal length")
        na = float(np.linalg.norm(a))
        if na == 0:
            raise DegenerateInputError("the reference vector must be nonzero")
        if not 0.0 <= self.delta1 < 0.1:
            raise InvalidInputError("delta1 must lie in [0, 0.1)")
        if np.linalg.norm(a - b) > self.delta1 * na * (1 + 1e-12):
            raise InvalidInputError("||a - b|| exceeds delta1 * ||a||")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def scaled(cls, a, factor):
        """b = factor * a, the extreme adjacent vector in the norm direction."""
        a = np.asarray(a, dtype=np.float64)
        return cls(a, factor * a, abs(factor - 1.0))


def sample_sketches(a, m, samples, seed=0, first_round=0):
    """``(samples, m)`` array of C(a) over rounds first_round, first_round+1, ..."""
    a = np.asarray(a, dtype=np.float64)
    out = np.empty((samples, m))
    for start in range(0, samples, _CHUNK):
        stop = min(samples, start + _CHUNK)
        rounds = np.arange(first_round + start, first_round + stop, dtype=np.uint64)
        basis = round_bases(seed, rounds, m, a.size).reshape(-1, a.size)
        out[start:stop] = kernels.dot_rows(a[None, :], basis).reshape(stop - start, m)
    return out


@dataclass(frozen=True)
class NormReport:
    m: int
    samples: int
    ks_statistic: float
    p_value: float
    alpha: float
    mean_ratio: float  # sample mean of ||C(a)||^2 / ||a||^2, expect m
    var_ratio: float  # sample variance of ||C(a)||^2 / ||a||^2, expect 2m
    max_abs_corr: float  # largest off-diagonal coefficient correlation (0 when m = 1)

    @property
    def passed(self):
        return self.p_value >= self.alpha

    def summary(self):
        verdict = "consistent with chi2(m)" if self.passed else "REJECTED chi2(m)"
        return (f"sketch norm m={self.m} samples={self.samples}: KS={self.ks_statistic:.4g} "
                f"p={self.p_value:.4g} mean={self.mean_ratio:.4g} var={self.var_ratio:.4g} "
                f"max|corr|={self.max_abs_corr:.3g} -> {verdict}")


def sketch_norm_distribution_check(a, m, samples, seed=0, alpha=1e-3):
    """Kolmogorov-Smirnov test of ||C(a)||^2 / ||a||^2 against chi-square with m dof."""
    a = np.asarray(a, dtype=np.float64)
    norm_sq = float(a @ a)
    if norm_sq == 0:
        raise DegenerateInputError("||a|| = 0: the sketch is identically zero")
    C = sample_sketches(a, m, samples, seed)
    ratio = np.einsum("ij,ij->i", C, C) / norm_sq
    ks = stats.kstest(ratio, stats.chi2(m).cdf)
    if m > 1:
        corr = np.corrcoef(C, rowvar=False)
        max_corr = float(np.max(np.abs(corr - np.diag(np.diag(corr)))))
    else:
        max_corr = 0.0
    return NormReport(m, samples, float(ks.statistic), float(ks.pvalue), alpha,
                      float(ratio.mean()), float(ratio.var()), max_corr)


def clopper_pearson_upper(k, n, confidence=0.99):
    """Exact one-sided upper confidence bound for a binomial proportion."""
    if k >= n:
        return 1.0
    return float(stats.beta.ppf(confidence, k + 1, n - k))


@dataclass(frozen=True)
class TailReport:
    m: int
    delta1: float
    delta: float
    epsilon: float
    sigma1: float
    sigma2: float
    event: str  # "L > eps" or "L < -eps"
    trials: int
    violations: int
    upper_bound: float

    @property
    def frequency(self):
        return self.violations / self.trials

    @property
    def passed(self):
        return self.upper_bound <= self.delta

    def csv_row(self):
        return [self.m, repr(self.delta1), repr(self.delta), repr(self.epsilon), self.event,
                self.trials, self.violations, repr(self.upper_bound),
                "consistent" if self.passed else "violated"]

    CSV_HEADER = ("m", "delta1", "delta", "epsilon", "event", "trials", "violations",
                  "upper_bound_99", "verdict")


def dp_tail_check(pair, m, params, trials, seed=0):
    """Frequency of the privacy-loss tail event with a 99% Clopper-Pearson upper bound.

    Sketches are drawn for the reference ``a``; the event is {L > eps} when
    ||a|| > ||b|| and {L < -eps} otherwise. Passes iff the bound is <= delta.
    """
    if trials < MIN_TRIALS:
        raise InsufficientSamplesError(f"need at least {MIN_TRIALS} trials, got {trials}")
    sigma1 = float(np.linalg.norm(pair.a))
    sigma2 = float(np.linalg.norm(pair.b))
    if sigma2 == 0:
        raise DegenerateInputError("||b|| = 0")
    C = sample_sketches(pair.a, m, trials, seed)
    loss = privacy_loss(sigma1, sigma2, np.einsum("ij,ij->i", C, C), m)
    eps = params.epsilon
    if sigma1 > sigma2:
        event, hits = "L > eps", int(np.count_nonzero(loss > eps))
    else:
        event, hits = "L < -eps", int(np.count_nonzero(loss < -eps))
    return TailReport(m, params.delta1, params.delta, eps, sigma1, sigma2, event, trials, hits,
                      clopper_pearson_upper(hits, trials))
