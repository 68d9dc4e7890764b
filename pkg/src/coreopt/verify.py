"""Property suites that check the lemmas and theorems numerically.

Each suite returns a list of :class:`Claim`; ``bench verify SUITE`` prints one
line per claim and exits 1 if any claim fails. Sizes default to the values
used by the acceptance tests; the suites listed in ``FAST_SUITES`` make up
``bench verify all``.
"""

import io
import math
from dataclasses import dataclass

import numpy as np

from .compressors import core_estimates, core_variance_bound, core_variance_closed_form
from .datasets import from_dense, normalize_rows, parse_libsvm, serialize, synth_features
from .objectives import (QuadraticObjective, RidgeSeparableObjective, SpectrumSpec,
                         TwoLayerObjective)
from .optimizers import (AGD_CONSTANT, AgdConfig, BaselineConfig, GdConfig, NcConfig,
                         run_cgd, run_core_agd, run_core_gd, run_core_gd_nonconvex,
                         run_core_gd_trajectory)
from .privacy import AdjacentPair, DpParams, dp_tail_check, sketch_norm_distribution_check
from .randomness import round_bases
from .simnet import Topology


@dataclass(frozen=True)
class Claim:
    name: str
    passed: bool
    measured: float
    bound: float
    relation: str = "<="
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: measured {self.measured:.10g} {self.relation} {self.bound:.10g}{extra}"


def _le(name, measured, bound, detail=""):
    return Claim(name, bool(measured <= bound), float(measured), float(bound), "<=", detail)


def _ge(name, measured, bound, detail=""):
    return Claim(name, bool(measured >= bound), float(measured), float(bound), ">=", detail)


# ---------------------------------------------------------------- instances

def shifted_quadratic(d, mu=1e-3, n_machines=1, rotation_seed=None):
    """lambda_i = i^-2 shifted so lambda_d = mu."""
    return QuadraticObjective(SpectrumSpec.power_decay(d, 2.0, mu, rotation_seed), n_machines)


def random_psd(d, seed):
    g = np.random.default_rng(seed).standard_normal((d, d))
    return g @ g.T / d


@dataclass(frozen=True)
class NonconvexInstance:
    obj: RidgeSeparableObjective
    x0: np.ndarray
    cfg: NcConfig


def nonconvex_instance(d=100, n_rows=500, n_machines=5, alpha=1.0, R=100.0, decay=0.5,
                       x0_norm=3.0, eps=0.05, max_rounds=400000, data_seed=0, record_every=1):
    """Ridge-separable problem with the bounded non-convex link and Option II settings.

    Features have covariance diag(i^-decay) scaled so every row has squared
    norm R; targets come from a planted model plus noise. Delta uses the lower
    bound f >= 0, H the sampled Hessian-Lipschitz estimate.
    """
    B = synth_features(n_rows, d, decay, seed=data_seed) * math.sqrt(R)
    rng = np.random.default_rng(data_seed + 1)
    planted = rng.standard_normal(d) / math.sqrt(d)
    y = B @ planted + 0.1 * rng.standard_normal(n_rows)
    obj = RidgeSeparableObjective(B, y, "bounded_nonconvex", alpha, n_machines, shard_seed=0, R=R)
    x0 = np.random.default_rng(data_seed + 2).standard_normal(d)
    x0 *= x0_norm / np.linalg.norm(x0)
    L = obj.smoothness
    r1 = obj.trace_bound()
    H = obj.hessian_lipschitz_estimate(200, scale=x0_norm, seed=data_seed)
    m = min(d, max(1, math.floor(r1 / L)))
    cfg = NcConfig(m=m, r1=r1, H=H, L=L, Delta=obj.value(x0), option="II",
                   max_rounds=max_rounds, eps=eps, record_every=record_every)
    return NonconvexInstance(obj, x0, cfg)


def fitted_decay(values, start, stop=None):
    """exp(slope) of a least-squares line through log(values[start:stop])."""
    v = np.asarray(values[start:stop], dtype=np.float64)
    k = np.arange(len(v))
    return float(math.exp(np.polyfit(k, np.log(v), 1)[0]))


# ---------------------------------------------------------------- compressors

def lemma31(d=16, m=4, samples=200_000, seed=0):
    a = np.zeros(d)
    a[:4] = (1.0, 2.0, -0.5, 3.0)
    est = core_estimates(a, seed, np.arange(samples), m)
    se = est.std(axis=0, ddof=1) / math.sqrt(samples)
    z = np.max(np.abs(est.mean(axis=0) - a) / se)
    return [_le("lemma31.unbiased", z, 4.0, f"max |mean - a| / SE over {d} coords, N={samples}")]


def lemma32(n_matrices=5, n_vectors=3, d=12, m=3, samples=200_000, seed=0):
    worst_rel, worst_excess = 0.0, -math.inf
    stream = seed
    for i in range(n_matrices):
        A = random_psd(d, 1000 + i)
        for j in range(n_vectors):
            a = np.random.default_rng(2000 + 10 * i + j).standard_normal(d)
            err = core_estimates(a, stream, np.arange(samples), m) - a
            stream += 1
            mc = float(np.mean(np.einsum("td,de,te->t", err, A, err)))
            exact = core_variance_closed_form(a, A, m)
            worst_rel = max(worst_rel, abs(mc / exact - 1.0))
            worst_excess = max(worst_excess, mc / core_variance_bound(a, A, m) - 1.0)
    return [_le("lemma32.closed_form", worst_rel, 0.02, "max relative gap to (tr(A)|a|^2 + |a|_A^2)/m"),
            _le("lemma32.bound", worst_excess, 0.02, "max relative excess over (3tr(A)|a|^2 - |a|_A^2)/m")]


def fourth_moment(d=8, samples=1_000_000, seed=0, chunk=200_000):
    A = random_psd(d, 7)
    acc = np.zeros((d, d))
    for start in range(0, samples, chunk):
        X = round_bases(seed, np.arange(start, min(samples, start + chunk)), 1, d)[:, 0, :]
        q = np.einsum("td,de,te->t", X, A, X)
        acc += (X * q[:, None]).T @ X
    est = acc / samples
    target = np.trace(A) * np.eye(d) + 2.0 * A
    rel = np.linalg.norm(est - target) / np.linalg.norm(target)
    return [_le("fourth_moment.identity", rel, 0.02, "relative Frobenius error vs tr(A)I + 2A")]


def third_moment(d=16, m=2, samples=100_000, seed=0):
    g = np.random.default_rng(3).standard_normal(d)
    est = core_estimates(g, seed, np.arange(samples), m)
    third = float(np.mean(np.linalg.norm(est, axis=1) ** 3))
    bound = 1600.0 * (d / m) ** 1.5 * float(np.linalg.norm(g)) ** 3
    return [_le("third_moment.bound", third, bound, "E|grad estimate|^3")]


# ---------------------------------------------------------------- objectives

def lemma45(points=100, seed=0):
    claims = []
    for link in ("square_loss", "logistic", "bounded_nonconvex"):
        B = synth_features(60, 10, 1.0, seed=seed) * math.sqrt(2.0)
        y = np.where(np.random.default_rng(seed).random(60) < 0.5, -1.0, 1.0)
        obj = RidgeSeparableObjective(B, y, link, alpha=0.1)
        rng = np.random.default_rng(seed + 1)
        worst = max(float(np.trace(obj.hessian(rng.standard_normal(10) * 3))) for _ in range(points))
        # square loss attains the bound exactly; allow for rounding
        claims.append(_le(f"lemma45.trace.{link}", worst, obj.trace_bound() * (1 + 1e-12),
                          "max sampled tr(Hessian)"))
    return claims


def prop51(points=200, seed=0):
    """Width-1 networks, where alpha * r1 * r2 bounds the Hessian trace when r1 <= 1."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 5)
    x *= 0.9 / np.abs(x).sum()
    obj = TwoLayerObjective(x, hidden=1, activation="softplus", r2=2.0)
    worst = -math.inf
    for _ in range(points):
        theta = rng.standard_normal(obj.dim) * 2
        W, w = obj.unpack(theta)
        w *= min(1.0, obj.r2 / np.linalg.norm(w))
        worst = max(worst, obj.hessian_trace(np.concatenate([W.ravel(), w])))
    return [_le("prop51.trace.width1", worst, obj.trace_bound(), "max sampled tr(Hessian)")]


# ---------------------------------------------------------------- optimizers

def expected_descent(d=50, m=2, samples=10_000, seed=0):
    obj = shifted_quadratic(d, 1e-2)
    cfg = GdConfig.for_objective(obj, m=m)
    x = np.random.default_rng(5).standard_normal(d)
    g = obj.grad(x)
    est = core_estimates(g, seed, np.arange(samples), m)
    drops = np.array([obj.value(x) - obj.value(x - cfg.h * e) for e in est])
    lhs = drops.mean() + 4 * drops.std(ddof=1) / math.sqrt(samples)
    rhs = (cfg.h - 2.5 * cfg.h ** 2 * obj.trace / m) * float(g @ g)
    return [_ge("descent.one_step", lhs, rhs, "mean decrease + 4 SE vs (h - 5/2 h^2 tr/m)|grad|^2")]


def theorem41(d=200, mu=1e-3, seeds=50, rounds=20_000, fit_from=2_000):
    obj = shifted_quadratic(d, mu)
    cfg = GdConfig.for_objective(obj, max_rounds=rounds, target_gap=0.0)
    x0 = np.ones(d)
    gaps = np.zeros(rounds + 1)
    for s in range(seeds):
        gaps += run_core_gd(obj, cfg, s, x0=x0).column("f_gap")
    gaps /= seeds
    rate = fitted_decay(gaps, fit_from)
    c = 3 * cfg.m * mu / (16 * obj.trace)
    return [_le("theorem41.rate.literal", rate, (1 - c) * 1.2, "fitted decay vs (1 - 3m mu/(16 tr)) * 1.2"),
            _le("theorem41.rate.strict", rate, 1 - c / 1.2, "fitted decay vs 1 - (3m mu/(16 tr)) / 1.2")]


def corollary46(d=2000, n=50, mu=1e-3, target=1e-6, seeds=1):
    """Returns claims plus the CORE-GD floats so the AGD suite can reuse them."""
    obj = shifted_quadratic(d, mu, n)
    x0 = np.ones(d)
    base = BaselineConfig.for_objective(obj, max_rounds=200_000, target_gap=target,
                                        record_every=1000)
    cgd = run_cgd(obj, base, 0, x0=x0)
    cfg = GdConfig.for_objective(obj, max_rounds=1_000_000, target_gap=target, record_every=1000)
    core = [run_core_gd(obj, cfg, s, x0=x0) for s in range(seeds)]
    if cgd.target_floats is None or any(r.target_floats is None for r in core):
        return [Claim("corollary46.converged", False, math.nan, target, "<=")], None
    core_floats = float(np.mean([r.target_floats for r in core]))
    ratio = cgd.target_floats / core_floats
    predicted = d * obj.L / obj.trace
    return [_ge("corollary46.advantage", ratio, 10.0, f"CGD floats / CORE-GD floats, m={cfg.m}"),
            _le("corollary46.within3x", max(ratio / predicted, predicted / ratio), 3.0,
                f"measured ratio {ratio:.4g} vs dL/tr(A) = {predicted:.4g}")], core_floats


def theoremA1(d=2000, n=50, mu=1e-3, target=1e-6, rounds=20_000, seeds=3, core_gd_floats=None):
    obj = shifted_quadratic(d, mu, n)
    m = max(1, math.floor(obj.trace / obj.L))
    x0 = np.ones(d)
    if core_gd_floats is None:
        cfg = GdConfig.for_objective(obj, max_rounds=1_000_000, target_gap=target, record_every=1000)
        core_gd_floats = run_core_gd(obj, cfg, 0, x0=x0).target_floats
    acfg = AgdConfig.for_objective(obj, m, max_rounds=rounds, target_gap=target)
    runs = [run_core_agd(obj, acfg, s, x0=x0) for s in range(seeds)]
    reached = [r.target_floats for r in runs if r.target_floats is not None]
    agd_floats = float(np.mean(reached)) if len(reached) == seeds else math.inf
    gaps = np.mean([r.column("f_gap") for r in runs], axis=0)
    rate = fitted_decay(gaps, len(gaps) // 2)
    c = m * math.sqrt(mu) / (57600 * obj.sqrt_eigen_sum)
    detail = (f"h={acfg.h:.4g}, beta={acfg.momentum_beta:.4g}, "
              f"{'reached' if math.isfinite(agd_floats) else 'not reached'} within {rounds} rounds")
    return [_le("theoremA1.floats", agd_floats, core_gd_floats, "CORE-AGD vs CORE-GD floats to target; "
                + detail),
            _le("theoremA1.rate.literal", rate, (1 - c) * 1.2, "fitted decay vs (1 - c) * 1.2"),
            _le("theoremA1.rate.strict", rate, 1 - c / 1.2, "fitted decay vs 1 - c / 1.2")]


def theorem52(seeds=20, z=3.0, **instance_kw):
    inst = nonconvex_instance(**instance_kw)
    d = inst.obj.dim
    runs = [run_core_gd_nonconvex(inst.obj, inst.cfg, s, x0=inst.x0) for s in range(seeds)]
    horizon = min(r.rounds_run for r in runs)
    f0 = inst.obj.value(inst.x0)
    diffs = []
    for r in runs:
        f = r.column("f_gap")[:horizon + 1]
        g = r.column("grad_norm")[:horizon + 1]
        h = r.column("step_size")[1:horizon + 1]
        bound = f0 - np.concatenate([[0.0], np.cumsum(h / 2 * g[:-1] ** 2)])
        diffs.append(f - bound)
    diffs = np.array(diffs)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(seeds)
    # k = 0 holds with equality by construction, so the margin is taken over k >= 1
    excess = float(np.max(diffs.mean(axis=0)[1:] - z * se[1:]))
    budget = 10 * inst.cfg.round_budget(d)
    hit = [r.target_round for r in runs]
    worst = max(h if h is not None else math.inf for h in hit)
    return [_le("theorem52.descent", excess, 0.0,
                f"max over 1 <= k <= {horizon} of mean(f(x^k) - running bound) - {z} SE"),
            _le("theorem52.budget", worst, budget,
                f"rounds until min |grad| <= {inst.cfg.eps} (worst seed) vs 10x budget, m={inst.cfg.m}")]


def decentralized(d=40, n=8, m=1, rounds=100, seed=0):
    obj = QuadraticObjective(SpectrumSpec.power_decay(d, 2.0, 1e-2, rotation_seed=1), n,
                             heterogeneity=0.5, shard_seed=2)
    cfg = GdConfig.for_objective(obj, m=m)
    x0 = np.ones(d)
    central, _ = run_core_gd_trajectory(obj, cfg, seed, Topology.star(n), x0, rounds)
    complete, _ = run_core_gd_trajectory(obj, cfg, seed, Topology.complete(n), x0, rounds)
    ring_cfg = GdConfig.for_objective(obj, m=m, gossip_tol=1e-10, accelerated_gossip=True)
    ring, _ = run_core_gd_trajectory(obj, ring_cfg, seed, Topology.ring(n), x0, rounds)
    return [_le("decentralized.complete", np.max(np.abs(complete - central)), 1e-9,
                f"max coordinate gap over {rounds} rounds"),
            _le("decentralized.ring_chebyshev", np.max(np.abs(ring - central)), 1e-6,
                f"ring({n}), Chebyshev gossip to 1e-10")]


# ---------------------------------------------------------------- privacy

def dp(delta1=0.05, delta=0.01, ms=(1, 8, 64), trials=100_000, d=64, seed=0):
    params = DpParams(delta1, delta)
    a = np.random.default_rng(11).standard_normal(d)
    a /= np.linalg.norm(a)
    claims = []
    for m in ms:
        for factor in (1 + delta1, 1 - delta1):
            rep = dp_tail_check(AdjacentPair.scaled(a, factor), m, params, trials, seed)
            claims.append(_le(f"dp.tail.m{m}.{'up' if factor > 1 else 'down'}", rep.upper_bound, delta,
                              f"{rep.event}, eps={params.epsilon:.4g}, {rep.violations}/{trials} hits"))
    return claims


def sketch_norm(ms=(1, 4), samples=100_000, d=16, seed=0):
    a = np.random.default_rng(12).standard_normal(d)
    claims = []
    for m in ms:
        rep = sketch_norm_distribution_check(a, m, samples, seed)
        claims.append(_ge(f"sketch_norm.ks.m{m}", rep.p_value, rep.alpha, "KS p-value vs chi2(m)"))
        if m > 1:
            claims.append(_le(f"sketch_norm.corr.m{m}", rep.max_abs_corr, 0.02, "max |corr|"))
    return claims


# ---------------------------------------------------------------- parser

def fuzz_corpus(rows=1000, d=50, seed=0):
    """Random sparse dataset with awkward values (tiny, huge, negative zero, integers)."""
    rng = np.random.default_rng(seed)
    X = np.zeros((rows, d))
    for i in range(rows):
        k = rng.integers(0, d + 1)
        cols = rng.choice(d, k, replace=False)
        kinds = rng.integers(0, 4, k)
        vals = np.where(kinds == 0, rng.standard_normal(k),
                        np.where(kinds == 1, rng.standard_normal(k) * 1e-300,
                                 np.where(kinds == 2, rng.standard_normal(k) * 1e300,
                                          rng.integers(-5, 6, k).astype(float))))
        vals[vals == 0] = 1.0
        X[i, cols] = vals
    labels = rng.integers(-1, 10, rows).astype(float)
    return from_dense(X, labels)


def parser(rows=1000, seed=0):
    ds = fuzz_corpus(rows, seed=seed)
    back = parse_libsvm(io.StringIO(serialize(ds)), ds.dim)
    mismatches = 0 if back.equals(ds) else 1
    nz = normalize_rows(parse_libsvm(serialize(fuzz_corpus(rows, seed=seed + 1))))
    norms = nz.row_norms()
    dev = float(np.max(np.abs(norms[norms > 0] - 1.0)))
    return [_le("parser.roundtrip", mismatches, 0, f"{rows}-row fuzzed corpus"),
            _le("parser.normalize", dev, 1e-12, "max | |row| - 1 |")]


SUITES = {
    "lemma31": lemma31,
    "lemma32": lemma32,
    "fourth_moment": fourth_moment,
    "third_moment": third_moment,
    "lemma45": lemma45,
    "prop51": prop51,
    "descent": expected_descent,
    "theorem41": theorem41,
    "decentralized": decentralized,
    "dp": dp,
    "sketch_norm": sketch_norm,
    "parser": parser,
    "corollary46": lambda **kw: corollary46(**kw)[0],
    "theoremA1": theoremA1,
    "theorem52": theorem52,
}

# Suites that finish in well under a minute each; the rest run only by name.
FAST_SUITES = ("lemma31", "lemma32", "fourth_moment", "third_moment", "lemma45", "prop51",
               "descent", "decentralized", "sketch_norm", "parser")


def run_suite(name):
    names = FAST_SUITES if name == "all" else (name,)
    claims = []
    for n in names:
        claims.extend(SUITES[n]())
    return claims
