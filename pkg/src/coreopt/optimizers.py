"""CORE-GD, non-convex CORE-GD, CORE-AGD and the uncompressed/compressed baselines.

All runners share one shape: ``run_x(obj, cfg, seed, topology=None, x0=None)``
returns a :class:`RunRecord` whose ``floats`` column is the simulated ledger
total after each round. Round ``k`` draws its shared Gaussian vectors from the
stream key ``(seed, k, j)``.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .compressors import Compressor
from .errors import ConfigError, UnsupportedObjectiveError
from .objectives import QuadraticObjective
from .simnet import CommLedger, Topology, decentralized_round, star_round_detail, _machine_sum

AGD_CONSTANT = 14400.0
DIVERGENCE_FACTOR = 1e6


def _smoothness(obj):
    if isinstance(obj, QuadraticObjective):
        return obj.L
    return obj.smoothness


def _strong_convexity(obj):
    if isinstance(obj, QuadraticObjective):
        return obj.mu
    return getattr(obj, "alpha", 0.0)


# ---------------------------------------------------------------- configs

@dataclass(frozen=True)
class GdConfig:
    m: int
    trace_A: float
    L: float
    mu: float = 0.0
    max_rounds: int = 10000
    target_gap: float = 1e-6
    strict_budget: bool = True  # reject m > tr(A)/L instead of warning
    step_size: float = None  # None: m / (4 tr(A))
    gossip_iters: int = None  # None: derived from gossip_tol and the eigengap
    gossip_tol: float = 1e-10
    accelerated_gossip: bool = True
    record_every: int = 1

    def __post_init__(self):
        problems = []
        if self.m < 1:
            problems.append("m must be >= 1")
        if not self.trace_A > 0:
            problems.append("trace_A must be positive")
        if not self.L > 0:
            problems.append("L must be positive")
        if self.max_rounds < 0:
            problems.append("max_rounds must be >= 0")
        if self.record_every < 1:
            problems.append("record_every must be >= 1")
        if problems:
            raise ConfigError(problems)
        if self.m > self.trace_A / self.L * (1 + 1e-12):
            msg = f"m={self.m} exceeds tr(A)/L={self.trace_A / self.L:.6g}"
            if self.strict_budget:
                raise ConfigError([msg])
            warnings.warn(msg, stacklevel=2)

    @property
    def h(self):
        return self.step_size if self.step_size is not None else self.m / (4.0 * self.trace_A)

    @classmethod
    def for_objective(cls, obj, m=None, **kw):
        """Trace from ``obj.trace_bound()``; m defaults to floor(tr(A)/L)."""
        tr, L = obj.trace_bound(), _smoothness(obj)
        if m is None:
            m = max(1, math.floor(tr / L))
        return cls(m=m, trace_A=tr, L=L, mu=_strong_convexity(obj), **kw)


@dataclass(frozen=True)
class AgdConfig:
    m: int
    sqrt_eigen_sum: float
    mu: float
    max_rounds: int = 10000
    target_gap: float = 1e-6
    step_size: float = None  # None: m^2 / (14400^2 (sum sqrt(lambda))^2)
    beta: float = None  # None: sqrt(h mu)
    record_every: int = 1

    def __post_init__(self):
        problems = []
        if self.m < 1:
            problems.append("m must be >= 1")
        if not self.sqrt_eigen_sum > 0:
            problems.append("sqrt_eigen_sum must be positive")
        if not self.mu > 0:
            problems.append("mu must be positive; add an l2 term for merely convex problems")
        if problems:
            raise ConfigError(problems)
        if self.step_size is None and self.h * self.mu > AGD_CONSTANT ** -2:
            problems.append("h * mu exceeds 14400^-2")
        if not 0.0 < self.momentum_beta < 1.0:
            problems.append(f"beta={self.momentum_beta} must lie in (0, 1)")
        if problems:
            raise ConfigError(problems)

    @property
    def h(self):
        if self.step_size is not None:
            return self.step_size
        return self.m ** 2 / (AGD_CONSTANT ** 2 * self.sqrt_eigen_sum ** 2)

    @property
    def momentum_beta(self):
        return self.beta if self.beta is not None else math.sqrt(self.h * self.mu)

    @classmethod
    def for_objective(cls, obj, m, **kw):
        return cls(m=m, sqrt_eigen_sum=obj.sqrt_eigen_sum, mu=obj.mu, **kw)


@dataclass(frozen=True)
class NcConfig:
    m: int
    r1: float
    H: float
    L: float
    Delta: float
    delta: float = 0.1
    option: str = "II"
    max_rounds: int = 10000
    eps: float = 0.05
    p_mode: str = "as_written"  # or "norm_proxy": use ||grad estimate|| for p
    strict_budget: bool = True
    record_every: int = 1

    def __post_init__(self):
        problems = []
        if self.m < 1:
            problems.append("m must be >= 1")
        for name in ("r1", "H", "L", "Delta"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.option not in ("I", "II"):
            problems.append("option must be 'I' or 'II'")
        if self.p_mode not in ("as_written", "norm_proxy"):
            problems.append("p_mode must be 'as_written' or 'norm_proxy'")
        if not 0 < self.delta < 1:
            problems.append("delta must lie in (0, 1)")
        if self.option == "I" and self.max_rounds > 0 and \
                not self.m > math.log(self.max_rounds / self.delta):
            problems.append(f"option I needs m > log(N/delta) = "
                            f"{math.log(self.max_rounds / self.delta):.4g}")
        if problems:
            raise ConfigError(problems)
        if self.m > self.r1 / self.L * (1 + 1e-12):
            msg = f"m={self.m} exceeds r1/L={self.r1 / self.L:.6g}"
            if self.strict_budget:
                raise ConfigError([msg])
            warnings.warn(msg, stacklevel=2)

    def step_size(self, d, p=None):
        first = self.m / (16.0 * self.r1)
        if self.option == "II":
            scale = (self.L * self.Delta) ** -0.25
        elif p is not None and p > 0:
            scale = p ** -0.5
        else:
            return first
        second = H_SCALE * self.H ** -0.5 * scale * d ** -0.75 * self.m ** 0.75
        return min(first, second)

    def round_budget(self, d, eps=None):
        """max{Delta r1 / (m eps^2), second term} with the option's second term."""
        eps = self.eps if eps is None else eps
        first = self.Delta * self.r1 / (self.m * eps ** 2)
        if self.option == "II":
            second = (self.Delta ** 1.25 * self.L ** 0.25 * self.H ** 0.5 * d ** 0.75
                      / (self.m ** 0.75 * eps ** 2))
        else:
            second = self.Delta * self.H ** 0.5 * d ** 0.75 / (self.m ** 0.75 * eps ** 1.5)
        return max(first, second)


H_SCALE = 1.0 / 1600.0


@dataclass(frozen=True)
class BaselineConfig:
    L: float
    mu: float = 0.0
    max_rounds: int = 10000
    target_gap: float = 1e-6
    step_size: float = None  # None: 1/L
    momentum: float = None  # CAGD only; None: (sqrt L - sqrt mu)/(sqrt L + sqrt mu)
    kind: str = "identity"  # compressed GD only: topk, quantize or identity
    k: int = None
    record_every: int = 1

    @property
    def h(self):
        return self.step_size if self.step_size is not None else 1.0 / self.L

    @classmethod
    def for_objective(cls, obj, **kw):
        return cls(L=_smoothness(obj), mu=_strong_convexity(obj), **kw)


# ---------------------------------------------------------------- records

@dataclass
class RunRecord:
    algorithm: str
    seed: int
    rows: list = field(default_factory=list)
    status: str = "running"
    ledger: CommLedger = None
    x: np.ndarray = None
    target_round: int = None
    target_floats: int = None
    min_grad_norm: float = math.inf
    iterates: np.ndarray = None  # per-machine iterates of graph runs

    COLUMNS = ("round", "floats", "f_gap", "grad_norm", "step_size")

    def add(self, round, floats, f_gap, grad_norm, step_size):
        self.rows.append((int(round), int(floats), float(f_gap), float(grad_norm),
                          float(step_size)))

    def column(self, name):
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    @property
    def rounds_run(self):
        return self.rows[-1][0] if self.rows else 0

    @property
    def total_floats(self):
        return self.ledger.total if self.ledger is not None else 0

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(r[4])])


class _Tracker:
    """Shared bookkeeping: records rows, detects target, divergence and the round cap."""

    def __init__(self, obj, algorithm, seed, ledger, target, record_every, metric="gap"):
        self.obj = obj
        self.record = RunRecord(algorithm, seed, ledger=ledger)
        self.target = target
        self.every = record_every
        self.metric = metric
        self.initial_gap = None

    def observe(self, k, x, step, last=False, value=None, grad=None):
        """Record round ``k`` ending at ``x``; return True when the run should stop.

        ``value`` and ``grad`` may be passed when the caller already has them.
        """
        rec = self.record
        f = self.obj.value(x) if value is None else value
        gap = f - self.obj.f_star if self.obj.f_star is not None else f
        gnorm = float(np.linalg.norm(self.obj.grad(x) if grad is None else grad))
        rec.min_grad_norm = min(rec.min_grad_norm, gnorm)
        if self.initial_gap is None:
            self.initial_gap = gap
        reached = (gap <= self.target) if self.metric == "gap" else (rec.min_grad_norm <= self.target)
        diverged = not np.isfinite(gap) or (
            self.metric == "gap" and self.initial_gap > 0
            and gap > DIVERGENCE_FACTOR * self.initial_gap)
        stop = reached or diverged or last
        if k % self.every == 0 or stop:
            rec.add(k, rec.ledger.total, gap, gnorm, step)
        if reached and rec.target_round is None:
            rec.target_round, rec.target_floats = k, rec.ledger.total
            rec.status = "converged"
        elif diverged:
            rec.status = "diverged"
        elif last:
            rec.status = "max_rounds"
        rec.x = np.array(x, copy=True)
        return stop


def _start(obj, x0):
    return np.zeros(obj.dim) if x0 is None else np.array(x0, dtype=np.float64, copy=True)


def _topology(obj, topology):
    topology = Topology.star(obj.n_machines) if topology is None else topology
    if topology.n != obj.n_machines:
        raise ConfigError([f"topology has {topology.n} nodes but the objective "
                           f"is sharded over {obj.n_machines} machines"])
    return topology


# ---------------------------------------------------------------- CORE-GD

def run_core_gd(obj, cfg, seed, topology=None, x0=None):
    """x^{k+1} = x^k - h grad_estimate(x^k) with h = m / (4 tr(A)).

    On a graph topology each machine keeps its own iterate and the coefficient
    average is computed by gossip; the recorded iterate is the machine mean.
    """
    topology = _topology(obj, topology)
    ledger = CommLedger(topology.n)
    tr = _Tracker(obj, "core_gd", seed, ledger, cfg.target_gap, cfg.record_every)
    x = _start(obj, x0)
    h = cfg.h
    if tr.observe(0, x, 0.0, last=cfg.max_rounds == 0):
        return tr.record
    if topology.kind == "star":
        for k in range(cfg.max_rounds):
            g, _ = star_round_detail(obj.local_grads(x), seed, k, cfg.m, ledger)
            x = x - h * g
            if tr.observe(k + 1, x, h, last=k + 1 == cfg.max_rounds):
                break
        return tr.record
    X = np.tile(x, (topology.n, 1))
    for k in range(cfg.max_rounds):
        G = decentralized_round(obj.local_grads_at(X), seed, k, cfg.m, topology,
                                cfg.gossip_iters, ledger, cfg.accelerated_gossip, cfg.gossip_tol)
        X = X - h * G
        xbar = _machine_sum(X) / topology.n
        if tr.observe(k + 1, xbar, h, last=k + 1 == cfg.max_rounds):
            break
    tr.record.iterates = X
    return tr.record


def run_core_gd_trajectory(obj, cfg, seed, topology=None, x0=None, rounds=100):
    """Iterates of CORE-GD for ``rounds`` rounds as a ``(rounds+1, n, d)`` array.

    Star runs repeat the single iterate on every machine. Used to compare
    centralized and decentralized runs coordinate by coordinate.
    """
    topology = _topology(obj, topology)
    ledger = CommLedger(topology.n)
    x = _start(obj, x0)
    X = np.tile(x, (topology.n, 1))
    out = [X.copy()]
    for k in range(rounds):
        if topology.kind == "star":
            g, _ = star_round_detail(obj.local_grads(X[0]), seed, k, cfg.m, ledger)
            X = np.tile(X[0] - cfg.h * g, (topology.n, 1))
        else:
            X = X - cfg.h * decentralized_round(obj.local_grads_at(X), seed, k, cfg.m, topology,
                                                cfg.gossip_iters, ledger,
                                                cfg.accelerated_gossip, cfg.gossip_tol)
        out.append(X.copy())
    return np.stack(out), ledger


# ---------------------------------------------------------------- non-convex CORE-GD

def run_core_gd_nonconvex(obj, cfg, seed, topology=None, x0=None):
    """CORE-GD with the safeguarded step sizes and the keep-the-better comparison.

    The comparison exchanges one scalar per machine in each direction
    (local value differences up, the decision down), charged to the ledger.
    """
    topology = _topology(obj, topology)
    if topology.kind != "star":
        raise ConfigError(["non-convex CORE-GD runs on a star topology"])
    n = topology.n
    ledger = CommLedger(n)
    tr = _Tracker(obj, f"core_gd_nc_{cfg.option}", seed, ledger, cfg.eps, cfg.record_every,
                  metric="grad_norm")
    x = _start(obj, x0)
    fx = obj.value(x)
    local = obj.local_grads(x)
    if tr.observe(0, x, 0.0, last=cfg.max_rounds == 0, value=fx, grad=_machine_sum(local) / n):
        return tr.record
    for k in range(cfg.max_rounds):
        g, coeffs = star_round_detail(local, seed, k, cfg.m, ledger)
        if cfg.p_mode == "as_written":
            p = float(_machine_sum(coeffs[:, None])[0]) / cfg.m
        else:
            p = float(np.linalg.norm(g))
        h = cfg.step_size(obj.dim, p)
        cand = x - h * g
        f_cand = obj.value(cand)
        ledger.charge(k, uplink=n, downlink=n)
        if f_cand < fx:
            x, fx = cand, f_cand
            local = obj.local_grads(x)
        if tr.observe(k + 1, x, h, last=k + 1 == cfg.max_rounds, value=fx,
                      grad=_machine_sum(local) / n):
            break
    return tr.record


# ---------------------------------------------------------------- CORE-AGD

def run_core_agd(obj, cfg, seed, topology=None, x0=None):
    """Heavy ball: y^k = x^k + (1 - beta)(x^k - x^{k-1}); x^{k+1} = y^k - h grad_estimate(y^k)."""
    if not isinstance(obj, QuadraticObjective):
        raise UnsupportedObjectiveError("CORE-AGD is defined for quadratic objectives only")
    topology = _topology(obj, topology)
    if topology.kind != "star":
        raise ConfigError(["CORE-AGD runs on a star topology"])
    ledger = CommLedger(topology.n)
    tr = _Tracker(obj, "core_agd", seed, ledger, cfg.target_gap, cfg.record_every)
    x = _start(obj, x0)
    x_prev = x.copy()
    h, momentum = cfg.h, 1.0 - cfg.momentum_beta
    if tr.observe(0, x, 0.0, last=cfg.max_rounds == 0):
        return tr.record
    for k in range(cfg.max_rounds):
        y = x + momentum * (x - x_prev)
        g, _ = star_round_detail(obj.local_grads(y), seed, k, cfg.m, ledger)
        x_prev, x = x, y - h * g
        if tr.observe(k + 1, x, h, last=k + 1 == cfg.max_rounds):
            break
    return tr.record


# ---------------------------------------------------------------- baselines

def _exact_round(obj, x, k, ledger, n):
    d = obj.dim
    ledger.charge(k, uplink=n * d, downlink=n * d)
    return _machine_sum(obj.local_grads(x)) / n


def run_cgd(obj, cfg, seed=0, topology=None, x0=None):
    """Uncompressed distributed GD with step 1/L; d floats up and down per machine."""
    topology = _topology(obj, topology)
    n = topology.n
    ledger = CommLedger(n)
    tr = _Tracker(obj, "cgd", seed, ledger, cfg.target_gap, cfg.record_every)
    x = _start(obj, x0)
    h = cfg.h
    if tr.observe(0, x, 0.0, last=cfg.max_rounds == 0):
        return tr.record
    for k in range(cfg.max_rounds):
        x = x - h * _exact_round(obj, x, k, ledger, n)
        if tr.observe(k + 1, x, h, last=k + 1 == cfg.max_rounds):
            break
    return tr.record


def run_cagd(obj, cfg, seed=0, topology=None, x0=None):
    """Uncompressed Nesterov acceleration with step 1/L.

    Momentum is (sqrt L - sqrt mu)/(sqrt L + sqrt mu) when mu > 0 and k/(k+3)
    otherwise.
    """
    topology = _topology(obj, topology)
    n = topology.n
    ledger = CommLedger(n)
    tr = _Tracker(obj, "cagd", seed, ledger, cfg.target_gap, cfg.record_every)
    x = _start(obj, x0)
    x_prev = x.copy()
    h = cfg.h
    if cfg.momentum is not None:
        fixed = cfg.momentum
    elif cfg.mu > 0:
        fixed = (math.sqrt(cfg.L) - math.sqrt(cfg.mu)) / (math.sqrt(cfg.L) + math.sqrt(cfg.mu))
    else:
        fixed = None
    if tr.observe(0, x, 0.0, last=cfg.max_rounds == 0):
        return tr.record
    for k in range(cfg.max_rounds):
        mom = fixed if fixed is not None else k / (k + 3.0)
        y = x + mom * (x - x_prev)
        x_prev, x = x, y - h * _exact_round(obj, y, k, ledger, n)
        if tr.observe(k + 1, x, h, last=k + 1 == cfg.max_rounds):
            break
    return tr.record


def run_compressed_gd(obj, cfg, seed=0, topology=None, x0=None):
    """GD with a baseline compressor on both links.

    Each machine compresses its local gradient (top-k keeps a per-machine
    residual); the centre decodes, averages in machine order, compresses the
    average with its own compressor of the same kind and broadcasts it.
    """
    topology = _topology(obj, topology)
    n, d = topology.n, obj.dim
    ledger = CommLedger(n)
    tr = _Tracker(obj, f"gd_{cfg.kind}", seed, ledger, cfg.target_gap, cfg.record_every)
    machines = [Compressor(cfg.kind, d, k=cfg.k) for _ in range(n)]
    centre = Compressor(cfg.kind, d, k=cfg.k)
    x = _start(obj, x0)
    h = cfg.h
    if tr.observe(0, x, 0.0, last=cfg.max_rounds == 0):
        return tr.record
    for k in range(cfg.max_rounds):
        grads = obj.local_grads(x)
        msgs = [c.compress(g, k) for c, g in zip(machines, grads)]
        decoded = np.stack([c.decode(msg) for c, msg in zip(machines, msgs)])
        down = centre.compress(_machine_sum(decoded) / n, k)
        ledger.charge(k, uplink=sum(msg.wire_floats for msg in msgs),
                      downlink=n * down.wire_floats)
        x = x - h * centre.decode(down)
        if tr.observe(k + 1, x, h, last=k + 1 == cfg.max_rounds):
            break
    return tr.record


# ---------------------------------------------------------------- reporting

@dataclass(frozen=True)
class ReportRow:
    algorithm: str
    runs: int
    converged: int
    floats_mean: float
    floats_std: float
    rounds_mean: float
    rounds_std: float
    ratio_vs_reference: float  # reference floats / this algorithm's floats


def communication_report(records, reference=None):
    """Floats- and rounds-to-target per algorithm, mean and std over converged runs.

    ``records`` is an iterable of RunRecord; ``reference`` names the algorithm
    whose mean floats form the numerator of every ratio (default: the first).
    """
    groups = {}
    for r in records:
        groups.setdefault(r.algorithm, []).append(r)
    if not groups:
        return []
    stats = {}
    for name, runs in groups.items():
        hit = [r for r in runs if r.target_floats is not None]
        fl = np.array([r.target_floats for r in hit], dtype=np.float64)
        rd = np.array([r.target_round for r in hit], dtype=np.float64)
        stats[name] = (len(runs), len(hit),
                       float(fl.mean()) if hit else math.nan, float(fl.std()) if hit else math.nan,
                       float(rd.mean()) if hit else math.nan, float(rd.std()) if hit else math.nan)
    ref = reference if reference is not None else next(iter(groups))
    ref_floats = stats[ref][2] if ref in stats else math.nan
    rows = []
    for name, (runs, hit, fm, fs, rm, rs) in stats.items():
        ratio = ref_floats / fm if hit and fm > 0 else math.nan
        rows.append(ReportRow(name, runs, hit, fm, fs, rm, rs, ratio))
    return rows
