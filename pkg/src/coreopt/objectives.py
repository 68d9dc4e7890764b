"""Objective families with per-machine gradient oracles.

Every objective is the average ``f = (1/n) sum_i f_i`` of ``n`` machine-local
pieces; ``local_grads(x)`` returns all ``n`` local gradients as an ``(n, d)``
array and ``grad(x)`` the exact global gradient.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (InvalidDimensionError, InvalidInputError, InvalidShardError,
                     InvalidSpectrumError)


def _vector(x, d):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise InvalidDimensionError(f"expected a vector of length {d}, got shape {x.shape}")
    return x


def haar_rotation(d, seed):
    """Haar-distributed orthogonal matrix from the QR factorization of a Gaussian matrix."""
    g = np.random.default_rng(seed).standard_normal((d, d))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class SpectrumSpec:
    eigenvalues: tuple
    rotation_seed: int = None  # None: A is diagonal

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        if lam.ndim != 1 or lam.size == 0:
            raise InvalidSpectrumError("spectrum must be a non-empty sequence")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise InvalidSpectrumError("eigenvalues must be finite and nonnegative")
        if np.any(np.diff(lam) > 0):
            raise InvalidSpectrumError("eigenvalues must be in decreasing order")
        object.__setattr__(self, "eigenvalues", tuple(float(v) for v in lam))

    @classmethod
    def power_decay(cls, d, exponent=2.0, mu=None, rotation_seed=None):
        """lambda_i = i**-exponent; with ``mu`` every eigenvalue is shifted so lambda_d == mu."""
        lam = np.arange(1, d + 1, dtype=np.float64) ** -exponent
        if mu is not None:
            lam = lam + (mu - lam[-1])
            lam[-1] = mu
        return cls(tuple(lam), rotation_seed)

    @property
    def array(self):
        return np.asarray(self.eigenvalues)

    @property
    def dim(self):
        return len(self.eigenvalues)

    @property
    def L(self):
        return self.eigenvalues[0]

    @property
    def mu(self):
        return self.eigenvalues[-1]

    @property
    def trace(self):
        return float(np.sum(self.array))

    @property
    def sqrt_eigen_sum(self):
        return float(np.sum(np.sqrt(self.array)))


class Objective:
    """Base class: subclasses provide the local-gradient oracle and Hessian."""

    dim = 0
    n_machines = 1
    f_star = None

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def local_grads(self, x):
        raise NotImplementedError

    def local_grad(self, i, x):
        if not 0 <= i < self.n_machines:
            raise InvalidShardError(f"machine index {i} out of range [0, {self.n_machines})")
        return self.local_grads(x)[i]

    def local_grads_at(self, X):
        """Row i is machine i's local gradient at its own iterate ``X[i]``."""
        X = np.asarray(X, dtype=np.float64)
        return np.stack([self.local_grads(X[i])[i] for i in range(self.n_machines)])

    def hessian(self, x):
        raise NotImplementedError

    def trace_bound(self):
        raise NotImplementedError

    def gap(self, x):
        if self.f_star is None:
            raise InvalidInputError("f_star unknown for this objective")
        return self.value(x) - self.f_star


# ---------------------------------------------------------------- quadratics

class QuadraticObjective(Objective):
    """f(x) = x^T A x / 2 with A = U diag(lambda) U^T; machine i holds U diag(lambda*c_i) U^T.

    The per-machine weights ``c`` average to one across machines in every
    coordinate, so the shard Hessians average to ``A``.
    """

    f_star = 0.0

    def __init__(self, spectrum, n_machines=1, heterogeneity=0.0, shard_seed=0):
        if n_machines < 1:
            raise InvalidShardError("n_machines must be >= 1")
        if not 0.0 <= heterogeneity <= 1.0:
            raise InvalidShardError("heterogeneity must lie in [0, 1]")
        self.spectrum = spectrum
        self.dim = spectrum.dim
        self.n_machines = n_machines
        self.heterogeneity = heterogeneity
        self.shard_seed = shard_seed
        self._lam = spectrum.array
        self._U = None if spectrum.rotation_seed is None else haar_rotation(
            self.dim, spectrum.rotation_seed)
        if heterogeneity == 0.0 or n_machines == 1:
            self._weights = np.ones((n_machines, self.dim))
        else:
            w = np.random.default_rng(shard_seed).uniform(-1.0, 1.0, (n_machines, self.dim))
            w -= w.mean(axis=0)
            w /= max(1.0, float(np.max(np.abs(w))))
            self._weights = 1.0 + heterogeneity * w
        self._local_lam = self._weights * self._lam

    def shard(self, n, shard_seed=0, heterogeneity=None):
        h = self.heterogeneity if heterogeneity is None else heterogeneity
        return QuadraticObjective(self.spectrum, n, h, shard_seed)

    @property
    def L(self):
        return self.spectrum.L

    @property
    def mu(self):
        return self.spectrum.mu

    @property
    def trace(self):
        return self.spectrum.trace

    @property
    def sqrt_eigen_sum(self):
        return self.spectrum.sqrt_eigen_sum

    @property
    def matrix(self):
        if self._U is None:
            return np.diag(self._lam)
        return (self._U * self._lam) @ self._U.T

    def local_hessian(self, i):
        if self._U is None:
            return np.diag(self._local_lam[i])
        return (self._U * self._local_lam[i]) @ self._U.T

    def _to_eigen(self, x):
        return x if self._U is None else self._U.T @ x

    def _from_eigen(self, z):
        return z if self._U is None else z @ self._U.T

    def value(self, x):
        z = self._to_eigen(_vector(x, self.dim))
        return 0.5 * float(np.sum(self._lam * z * z))

    def grad(self, x):
        z = self._to_eigen(_vector(x, self.dim))
        return self._from_eigen(self._lam * z)

    def local_grads(self, x):
        z = self._to_eigen(_vector(x, self.dim))
        return self._from_eigen(self._local_lam * z)

    def local_grads_at(self, X):
        X = np.asarray(X, dtype=np.float64)
        Z = X if self._U is None else X @ self._U
        G = self._local_lam * Z
        return G if self._U is None else G @ self._U.T

    def local_value(self, i, x):
        z = self._to_eigen(_vector(x, self.dim))
        return 0.5 * float(np.sum(self._local_lam[i] * z * z))

    def hessian(self, x=None):
        return self.matrix

    def trace_bound(self):
        return self.trace

    def effective_dimension(self):
        return EffectiveDimensionReport(r1=self.trace, r_half=self.sqrt_eigen_sum, exact=True)


# ---------------------------------------------------------------- ridge-separable

def _square(t, y):
    u = t - y
    return 0.5 * u * u, u, np.ones_like(u)


def _logistic(t, y):
    z = y * t
    s_neg = expit(-z)
    return np.logaddexp(0.0, -z), -y * s_neg, s_neg * (1.0 - s_neg)


def _bounded_nonconvex(t, y):
    u = t - y
    q = 1.0 + u * u
    return u * u / q, 2.0 * u / (q * q), (2.0 - 6.0 * u * u) / (q * q * q)


LINKS = {
    # name: (function returning (sigma, sigma', sigma''), sup sigma'')
    "square_loss": (_square, 1.0),
    "logistic": (_logistic, 0.25),
    "bounded_nonconvex": (_bounded_nonconvex, 2.0),
}


class RidgeSeparableObjective(Objective):
    """f(x) = (1/N) sum_i sigma(beta_i^T x; y_i) + (alpha/2)||x||^2.

    Rows are shuffled with ``shard_seed`` and dealt round-robin to machines;
    machine ``i`` holds ``f_i = (n/N) sum_{rows of i} sigma + (alpha/2)||x||^2``
    so the machine average equals ``f`` for any row counts.
    """

    def __init__(self, betas, labels=None, link="square_loss", alpha=0.0,
                 n_machines=1, shard_seed=0, R=None):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 2 or betas.shape[0] == 0:
            raise InvalidDimensionError("betas must be a non-empty (N, d) array")
        if link not in LINKS:
            raise InvalidInputError(f"unknown link {link!r}; choose from {sorted(LINKS)}")
        N, d = betas.shape
        if n_machines < 1 or n_machines > N:
            raise InvalidShardError(f"cannot shard {N} rows over {n_machines} machines")
        if alpha < 0:
            raise InvalidInputError("alpha must be nonnegative")
        self.betas = betas
        self.labels = np.zeros(N) if labels is None else np.asarray(labels, dtype=np.float64)
        if self.labels.shape != (N,):
            raise InvalidDimensionError("labels must have one entry per row")
        self.link = link
        self._fn, self.L0 = LINKS[link]
        self.alpha = float(alpha)
        self.dim = d
        self.n_rows = N
        self.n_machines = n_machines
        self.shard_seed = shard_seed
        row_norms = np.einsum("ij,ij->i", betas, betas)
        self.R = float(np.max(row_norms)) if R is None else float(R)
        if np.max(row_norms) > self.R * (1 + 1e-12):
            raise InvalidInputError("declared R is below the largest squared row norm")
        perm = np.random.default_rng(shard_seed).permutation(N) if n_machines > 1 else np.arange(N)
        parts = [perm[i::n_machines] for i in range(n_machines)]
        self._owner = np.zeros((n_machines, N))
        for i, rows in enumerate(parts):
            self._owner[i, rows] = n_machines / N
        self.shards = parts
        self.f_star = None

    def shard(self, n, shard_seed=0):
        return RidgeSeparableObjective(self.betas, self.labels, self.link, self.alpha,
                                       n, shard_seed, self.R)

    def _terms(self, x):
        return self._fn(self.betas @ x, self.labels)

    def value(self, x):
        x = _vector(x, self.dim)
        s, _, _ = self._terms(x)
        return float(np.mean(s)) + 0.5 * self.alpha * float(x @ x)

    def grad(self, x):
        x = _vector(x, self.dim)
        _, ds, _ = self._terms(x)
        return self.betas.T @ ds / self.n_rows + self.alpha * x

    def local_grads(self, x):
        x = _vector(x, self.dim)
        _, ds, _ = self._terms(x)
        return (self._owner * ds) @ self.betas + self.alpha * x

    def local_value(self, i, x):
        x = _vector(x, self.dim)
        rows = self.shards[i]
        s, _, _ = self._fn(self.betas[rows] @ x, self.labels[rows])
        return float(np.sum(s)) * self.n_machines / self.n_rows + 0.5 * self.alpha * float(x @ x)

    def hessian(self, x):
        x = _vector(x, self.dim)
        _, _, dds = self._terms(x)
        return (self.betas.T * dds) @ self.betas / self.n_rows + self.alpha * np.eye(self.dim)

    def dominating_matrix(self):
        """A = L0 * B^T B / N + alpha I, which dominates every Hessian."""
        return self.L0 * (self.betas.T @ self.betas) / self.n_rows + self.alpha * np.eye(self.dim)

    def trace_bound(self):
        """d * alpha + L0 * R."""
        return self.dim * self.alpha + self.L0 * self.R

    @property
    def smoothness(self):
        return float(np.linalg.eigvalsh(self.dominating_matrix())[-1])

    def hessian_lipschitz_estimate(self, n_pairs=200, scale=1.0, seed=0, safety=2.0):
        """Sampled max ||H(x) - H(y)||_2 / ||x - y|| times ``safety``."""
        rng = np.random.default_rng(seed)
        best = 0.0
        for _ in range(n_pairs):
            x = rng.standard_normal(self.dim) * scale / np.sqrt(self.dim)
            y = x + rng.standard_normal(self.dim) * scale / np.sqrt(self.dim)
            diff = np.linalg.norm(self.hessian(x) - self.hessian(y), 2)
            best = max(best, diff / np.linalg.norm(x - y))
        return safety * best

    def estimate_f_star(self, x0=None, tol=1e-13, max_iter=200000):
        """Minimize by exact gradient descent with step 1/L and cache ``f_star``."""
        x = np.zeros(self.dim) if x0 is None else _vector(x0, self.dim).copy()
        h = 1.0 / self.smoothness
        prev = self.value(x)
        for _ in range(max_iter):
            x = x - h * self.grad(x)
            cur = self.value(x)
            if prev - cur <= tol * max(1.0, abs(cur)) and np.linalg.norm(self.grad(x)) < 1e-9:
                break
            prev = cur
        self.f_star = self.value(x)
        return self.f_star


# ---------------------------------------------------------------- two-layer network

ACTIVATIONS = {
    # name: (sigma, sigma', sigma'', sup sigma'')
    "softplus": (lambda t: np.logaddexp(0.0, t), expit,
                 lambda t: expit(t) * (1.0 - expit(t)), 0.25),
    "tanh": (np.tanh, lambda t: 1.0 - np.tanh(t) ** 2,
             lambda t: -2.0 * np.tanh(t) * (1.0 - np.tanh(t) ** 2), 4.0 / (3.0 * np.sqrt(3.0))),
}


class TwoLayerObjective(Objective):
    """f(W, w) = w^T sigma(W^T x) for a fixed input x; parameters packed as [vec(W), w].

    ``W`` has shape ``(p, h)`` (row-major in the parameter vector).
    """

    def __init__(self, x_input, hidden, activation="softplus", r2=1.0):
        self.x_input = np.asarray(x_input, dtype=np.float64)
        if self.x_input.ndim != 1:
            raise InvalidDimensionError("x_input must be a vector")
        if activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {activation!r}")
        self.p = self.x_input.size
        self.hidden = hidden
        self.activation = activation
        self._s, self._ds, self._dds, self.alpha = ACTIVATIONS[activation]
        self.r1 = float(np.sum(np.abs(self.x_input)))
        self.r2 = float(r2)
        self.dim = self.p * hidden + hidden

    def unpack(self, theta):
        theta = _vector(theta, self.dim)
        return theta[:self.p * self.hidden].reshape(self.p, self.hidden), theta[self.p * self.hidden:]

    def value(self, theta):
        W, w = self.unpack(theta)
        return float(w @ self._s(W.T @ self.x_input))

    def grad(self, theta):
        W, w = self.unpack(theta)
        z = W.T @ self.x_input
        gW = np.outer(self.x_input, w * self._ds(z))
        return np.concatenate([gW.ravel(), self._s(z)])

    def local_grads(self, theta):
        return self.grad(theta)[None, :]

    def hessian(self, theta):
        W, w = self.unpack(theta)
        p, h = self.p, self.hidden
        z = W.T @ self.x_input
        x = self.x_input
        H = np.zeros((self.dim, self.dim))
        # d2f / dW_jk dW_il = [k == l] w_k sigma''(z_k) x_j x_i
        ww = np.zeros((p, h, p, h))
        coef = w * self._dds(z)
        for k in range(h):
            ww[:, k, :, k] = coef[k] * np.outer(x, x)
        H[:p * h, :p * h] = ww.reshape(p * h, p * h)
        # d2f / dW_jk dw_l = [k == l] sigma'(z_k) x_j
        cross = np.zeros((p, h, h))
        dz = self._ds(z)
        for k in range(h):
            cross[:, k, k] = dz[k] * x
        H[:p * h, p * h:] = cross.reshape(p * h, h)
        H[p * h:, :p * h] = H[:p * h, p * h:].T
        return H

    def hessian_trace(self, theta):
        W, w = self.unpack(theta)
        return float(self.x_input @ self.x_input) * float(w @ self._dds(W.T @ self.x_input))

    def trace_bound(self):
        """alpha * r1 * r2 with r1 = ||x||_1 and r2 the bound on ||w||."""
        return self.alpha * self.r1 * self.r2

    def valid_trace_bound(self):
        """alpha * ||x||_2^2 * sqrt(h) * r2, which holds for every hidden width."""
        return self.alpha * float(self.x_input @ self.x_input) * np.sqrt(self.hidden) * self.r2


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class EffectiveDimensionReport:
    r1: float
    r_half: float
    exact: bool  # False: sampled lower estimate of the supremum


def effective_dimension(obj, points=()):
    """r_alpha = sup_x sum_i |lambda_i(Hessian)|^alpha for alpha in {1, 1/2}.

    Exact for quadratics; otherwise the maximum over ``points`` (a lower
    estimate of the supremum, reported with ``exact=False``).
    """
    if isinstance(obj, QuadraticObjective):
        return obj.effective_dimension()
    r1 = r_half = 0.0
    for x in points:
        ev = np.abs(np.linalg.eigvalsh(obj.hessian(x)))
        r1 = max(r1, float(np.sum(ev)))
        r_half = max(r_half, float(np.sum(np.sqrt(ev))))
    return EffectiveDimensionReport(r1, r_half, exact=False)


@dataclass(frozen=True)
class DominationResult:
    ok: bool
    min_eigenvalue: float
    violating_point: np.ndarray = None


def hessian_dominated_check(obj, trial_points, A, tol=1e-9):
    """True iff A - Hessian(x) is PSD (min eigenvalue >= -tol) at every trial point."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (obj.dim, obj.dim) or np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
        raise InvalidInputError("A must be a symmetric d x d matrix")
    worst = np.inf
    for x in trial_points:
        ev = float(np.linalg.eigvalsh(A - obj.hessian(x))[0])
        worst = min(worst, ev)
        if ev < -tol:
            return DominationResult(False, ev, np.asarray(x, dtype=np.float64).copy())
    return DominationResult(True, worst)
