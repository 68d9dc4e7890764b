"""Deterministic simulated network: star rounds, gossip averaging and a float ledger.

Machines are simulated in-process. Every reduction over machines runs in
increasing machine index, so results never depend on how local gradients were
computed or in which order they arrived.

Estimator convention: with ``f = (1/n) sum_i f_i`` the star round returns
``(1/(n m)) sum_i sum_j p_ij xi_j``. The decentralized round gossips the
coefficients towards their machine average ``p_bar_j = (1/n) sum_i p_ij`` and
reconstructs ``(1/m) sum_j p_bar_j xi_j`` locally, which is the same estimator
once gossip has converged.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .compressors import project, reconstruct_from_basis
from .errors import InvalidDimensionError, InvalidInputError, NonConvergenceError
from .randomness import round_basis


@dataclass(frozen=True)
class Topology:
    kind: str  # "star" or "graph"
    n: int
    edges: tuple = ()

    def __post_init__(self):
        if self.kind not in ("star", "graph"):
            raise InvalidInputError(f"unknown topology kind {self.kind!r}")
        if self.n < 1:
            raise InvalidInputError("a topology needs at least one machine")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n) or i == j:
                raise InvalidInputError(f"invalid edge ({i}, {j}) for {self.n} nodes")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise InvalidInputError(f"duplicate edge {e}")
            seen.add(e)
        object.__setattr__(self, "edges", tuple(sorted(seen)))

    @classmethod
    def star(cls, n):
        return cls("star", n)

    @classmethod
    def graph(cls, n, edges):
        return cls("graph", n, tuple(tuple(e) for e in edges))

    @classmethod
    def ring(cls, n):
        return cls.graph(n, [(i, (i + 1) % n) for i in range(n)] if n > 2 else
                         ([(0, 1)] if n == 2 else []))

    @classmethod
    def complete(cls, n):
        return cls.graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def laplacian(self):
        lap = np.zeros((self.n, self.n))
        for i, j in self.edges:
            lap[i, j] -= 1.0
            lap[j, i] -= 1.0
            lap[i, i] += 1.0
            lap[j, j] += 1.0
        return lap

    @cached_property
    def _lap_eigs(self):
        return np.linalg.eigvalsh(self.laplacian)

    @cached_property
    def gossip_matrix(self):
        """W = I - Lap / lambda_max(Lap); symmetric and doubly stochastic."""
        lmax = self._lap_eigs[-1]
        if lmax <= 0:
            return np.eye(self.n)
        return np.eye(self.n) - self.laplacian / lmax

    @cached_property
    def eigengap(self):
        """lambda_2(Lap) / lambda_max(Lap); 0 for a disconnected graph, 1 for one node."""
        if self.n == 1:
            return 1.0
        ev = self._lap_eigs
        gap = ev[1] / ev[-1] if ev[-1] > 0 else 0.0
        return 0.0 if gap < 1e-12 else float(min(gap, 1.0))

    @property
    def connected(self):
        return self.eigengap > 0.0


@dataclass
class CommLedger:
    """Scalars crossing links, by direction and by round."""

    n_machines: int = 1
    uplink: int = 0
    downlink: int = 0
    gossip: int = 0
    per_round: dict = field(default_factory=dict)

    def charge(self, round, uplink=0, downlink=0, gossip=0):
        if min(uplink, downlink, gossip) < 0:
            raise InvalidInputError("ledger charges must be nonnegative")
        self.uplink += uplink
        self.downlink += downlink
        self.gossip += gossip
        row = self.per_round.setdefault(round, [0, 0, 0])
        row[0] += uplink
        row[1] += downlink
        row[2] += gossip

    @property
    def total(self):
        return self.uplink + self.downlink + self.gossip

    @property
    def rounds(self):
        return len(self.per_round)

    def per_machine(self):
        """Average floats handled per machine in each direction."""
        n = self.n_machines
        return {"uplink": self.uplink / n, "downlink": self.downlink / n, "gossip": self.gossip / n}

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "uplink", "downlink", "gossip"])
        for rnd in sorted(self.per_round):
            w.writerow([rnd, *self.per_round[rnd]])


def _machine_sum(P):
    """Sum rows of P in increasing machine index."""
    acc = P[0].copy()
    for i in range(1, P.shape[0]):
        acc = acc + P[i]
    return acc


def star_round(grads, seed, round, m, ledger=None):
    """One CORE round on a star: machines sketch, the centre averages, all reconstruct.

    ``grads`` is the ``(n, d)`` stack of local gradients. Charges ``n*m`` uplink
    and ``n*m`` downlink floats and returns the d-vector estimate.
    """
    return star_round_detail(grads, seed, round, m, ledger)[0]


def star_round_detail(grads, seed, round, m, ledger=None):
    """Like :func:`star_round` but also returns the averaged coefficients."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 2:
        raise InvalidDimensionError("grads must be an (n, d) stack of local gradients")
    n, d = grads.shape
    basis = round_basis(seed, round, m, d)
    coeffs = project(grads, basis)
    if ledger is not None:
        ledger.charge(round, uplink=n * m, downlink=n * m)
    mean_coeffs = _machine_sum(coeffs) / n
    return reconstruct_from_basis(mean_coeffs, basis), mean_coeffs


def gossip_iterations(tol, eigengap, accelerated=True):
    """ceil(ln(1/tol) / sqrt(gamma)) with Chebyshev, ceil(ln(1/tol) / gamma) without."""
    if eigengap <= 0:
        raise NonConvergenceError("graph is disconnected; gossip cannot reach the average")
    if eigengap >= 1.0:
        return 1
    rate = math.sqrt(eigengap) if accelerated else eigengap
    return math.ceil(math.log(1.0 / tol) / rate)


def _mix(W, V):
    return kernels.dot_rows(W, np.ascontiguousarray(V.T))


def gossip_average(values, topology, iterations=None, ledger=None, round=0,
                   accelerated=False, tol=None):
    """Run ``iterations`` gossip steps on the ``(n, m)`` array ``values``.

    Plain mode applies ``V <- W V``; accelerated mode applies the Chebyshev
    polynomial of W that is 1 at eigenvalue 1 and smallest on [0, 1 - gamma].
    Either way each iteration is one exchange over every edge in both
    directions, charged ``m * 2|E|`` floats. If ``iterations`` is None it is
    derived from ``tol``.
    """
    V = np.array(values, dtype=np.float64, ndmin=2)
    if V.shape[0] != topology.n:
        raise InvalidDimensionError(f"expected {topology.n} rows, got {V.shape[0]}")
    if iterations is None:
        if tol is None:
            raise InvalidInputError("give either iterations or tol")
        iterations = gossip_iterations(tol, topology.eigengap, accelerated)
    if iterations < 0:
        raise InvalidInputError("iterations must be >= 0")
    if topology.n > 1 and iterations > 0 and not topology.connected and tol is not None:
        raise NonConvergenceError("graph is disconnected; gossip cannot reach the average")
    if ledger is not None and iterations:
        ledger.charge(round, gossip=V.shape[1] * 2 * topology.n_edges * iterations)
    W = topology.gossip_matrix
    upper = 1.0 - topology.eigengap
    if not accelerated or upper <= 1e-12 or topology.n == 1:
        for _ in range(iterations):
            V = _mix(W, V)
        return V
    # Chebyshev semi-iteration on [0, upper]: S = (W - c I) / e maps it to [-1, 1].
    c = e = upper / 2.0
    s1 = (1.0 - c) / e
    prev, cur = V, (_mix(W, V) - c * V) / (e * s1)
    ratio = 1.0 / s1  # T_{k-1}(s1) / T_k(s1)
    for _ in range(iterations - 1):
        nxt_ratio = 1.0 / (2.0 * s1 - ratio)
        S_cur = (_mix(W, cur) - c * cur) / e
        prev, cur = cur, 2.0 * nxt_ratio * S_cur - ratio * nxt_ratio * prev
        ratio = nxt_ratio
    return cur if iterations else V


def decentralized_round(grads, seed, round, m, topology, gossip_iters=None, ledger=None,
                        accelerated=True, tol=1e-10):
    """One CORE round over a graph; returns ``(n, d)`` per-machine gradient estimates.

    ``grads[i]`` is machine i's local gradient (possibly at its own iterate).
    """
    return decentralized_round_detail(grads, seed, round, m, topology, gossip_iters, ledger,
                                      accelerated, tol)[0]


def decentralized_round_detail(grads, seed, round, m, topology, gossip_iters=None, ledger=None,
                               accelerated=True, tol=1e-10):
    """Like :func:`decentralized_round` but also returns the gossiped coefficients."""
    grads = np.asarray(grads, dtype=np.float64)
    n, d = grads.shape
    if n != topology.n:
        raise InvalidDimensionError(f"{n} gradients for a {topology.n}-node topology")
    basis = round_basis(seed, round, m, d)
    coeffs = project(grads, basis)
    averaged = gossip_average(coeffs, topology, gossip_iters, ledger, round, accelerated, tol)
    return reconstruct_from_basis(averaged, basis), averaged
