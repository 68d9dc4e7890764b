"""Experiment configuration for ``bench run``: TOML schema, validation and assembly.

A config is one TOML document::

    name = "paper-desk"          # output subdirectory under $COREOPT_BENCH_OUT
    seeds = [0, 1]
    record_every = 1000          # trajectory row spacing (targets are always recorded)

    [objective]
    family = "quadratic"         # quadratic | ridge | libsvm
    dim = 2000
    exponent = 2.0               # lambda_i = i^-exponent
    mu = 1e-3                    # optional shift making lambda_d = mu
    x0 = "ones"                  # ones | zeros | random

    [topology]
    star = 50                    # or ring = 8, or graph = [[0, 1], [1, 2], ...]

    [target]
    metric = "gap"               # gap (convex runs) | grad_norm (core_gd_nc)
    threshold = 1e-6
    max_rounds = 200000

    [[algorithms]]
    name = "core_gd"             # core_gd | core_agd | core_gd_nc | cgd | cagd | gd_topk | gd_quantize
    m = 7                        # optional; defaults to floor(tr(A)/L)

Unknown keys anywhere are errors. Every problem is reported with its field
path before any run starts. The full key list per section is in ``SCHEMA``.
"""

import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .datasets import binarize, load_libsvm, normalize_rows, subsample, synth_features
from .errors import ConfigError, CoreError
from .objectives import LINKS, QuadraticObjective, RidgeSeparableObjective, SpectrumSpec
from .optimizers import AgdConfig, BaselineConfig, GdConfig, NcConfig
from .simnet import Topology

ALGORITHMS = ("core_gd", "core_agd", "core_gd_nc", "cgd", "cagd", "gd_topk", "gd_quantize")

_COMMON_ALG_KEYS = {"name", "label", "step_size", "step_size_grid", "max_rounds"}

SCHEMA = {
    "top": {"name", "seeds", "record_every", "objective", "topology", "target", "algorithms"},
    "objective.quadratic": {"family", "dim", "exponent", "mu", "rotation_seed", "heterogeneity",
                            "shard_seed", "x0", "x0_seed"},
    "objective.ridge": {"family", "rows", "dim", "decay", "data_seed", "link", "alpha", "R",
                        "noise", "shard_seed", "x0", "x0_seed", "x0_norm"},
    "objective.libsvm": {"family", "path", "dim", "normalize", "link", "alpha", "subsample",
                         "subsample_seed", "binarize", "shard_seed", "x0", "x0_seed", "x0_norm"},
    "topology": {"star", "ring", "graph"},
    "target": {"metric", "threshold", "max_rounds"},
    "core_gd": _COMMON_ALG_KEYS | {"m", "strict_budget", "gossip_iters", "gossip_tol",
                                   "accelerated_gossip"},
    "core_agd": _COMMON_ALG_KEYS | {"m", "beta"},
    "core_gd_nc": _COMMON_ALG_KEYS | {"m", "option", "delta", "p_mode", "H", "Delta",
                                      "strict_budget"},
    "cgd": set(_COMMON_ALG_KEYS),
    "cagd": _COMMON_ALG_KEYS | {"momentum"},
    "gd_topk": _COMMON_ALG_KEYS | {"k"},
    "gd_quantize": set(_COMMON_ALG_KEYS),
}

U64_MAX = 2 ** 64 - 1


@dataclass(frozen=True)
class Cell:
    """One (algorithm, seed) unit of work."""

    index: int  # position in the algorithm list after grid expansion
    label: str
    seed: int


@dataclass(frozen=True)
class AlgorithmSpec:
    label: str
    name: str
    settings: dict  # validated keys except name/label/step_size_grid


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seeds: tuple
    record_every: int
    objective: dict
    topology: dict
    metric: str
    threshold: float
    max_rounds: int
    algorithms: tuple  # of AlgorithmSpec
    base_dir: str  # directory of the config file; relative dataset paths resolve here
    digest: str  # sha256 of the raw config bytes

    def cells(self):
        return [Cell(i, a.label, s) for i, a in enumerate(self.algorithms) for s in self.seeds]

    def with_seeds(self, seeds):
        return ExperimentConfig(self.name, tuple(seeds), self.record_every, self.objective,
                                self.topology, self.metric, self.threshold, self.max_rounds,
                                self.algorithms, self.base_dir, self.digest)


# ---------------------------------------------------------------- loading

class _Problems:
    def __init__(self):
        self.items = []

    def add(self, field, message):
        self.items.append(f"{field}: {message}")

    def unknown(self, prefix, table, allowed):
        for key in sorted(set(table) - allowed):
            self.add(f"{prefix}{key}", "unknown key")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _check_type(p, field, value, kind, positive=False, nonneg=False):
    ok = {"int": _is_int, "num": _is_num, "bool": lambda v: isinstance(v, bool),
          "str": lambda v: isinstance(v, str)}[kind](value)
    if not ok:
        p.add(field, f"expected {'a number' if kind == 'num' else 'a ' + kind}, got {value!r}")
        return False
    if positive and not value > 0:
        p.add(field, f"must be positive, got {value!r}")
        return False
    if nonneg and value < 0:
        p.add(field, f"must be nonnegative, got {value!r}")
        return False
    return True


_TYPES = {
    "dim": ("int", True), "rows": ("int", True), "exponent": ("num", True), "mu": ("num", True),
    "rotation_seed": ("int", False), "heterogeneity": ("num", False), "shard_seed": ("int", False),
    "x0_seed": ("int", False), "x0_norm": ("num", True), "decay": ("num", False),
    "data_seed": ("int", False), "alpha": ("num", False), "R": ("num", True),
    "noise": ("num", False), "normalize": ("bool", False), "subsample": ("int", True),
    "subsample_seed": ("int", False), "binarize": ("num", False), "path": ("str", False),
    "link": ("str", False), "m": ("int", True), "k": ("int", True), "step_size": ("num", True),
    "max_rounds": ("int", False), "strict_budget": ("bool", False), "gossip_iters": ("int", False),
    "gossip_tol": ("num", True), "accelerated_gossip": ("bool", False), "beta": ("num", True),
    "option": ("str", False), "delta": ("num", True), "p_mode": ("str", False),
    "H": ("num", True), "Delta": ("num", True), "momentum": ("num", False),
}


def _check_fields(p, prefix, table):
    for key, value in table.items():
        if key in _TYPES:
            kind, positive = _TYPES[key]
            nonneg = kind in ("int", "num") and not positive
            _check_type(p, prefix + key, value, kind, positive=positive, nonneg=nonneg)


def load_config(path):
    """Read and validate ``path``; raises ConfigError listing every problem found."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from None
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"{path}: not valid TOML ({exc})"]) from None
    base = os.path.dirname(os.path.abspath(path))
    cfg = parse_config(doc, base, hashlib.sha256(raw).hexdigest())
    return cfg


def parse_config(doc, base_dir=".", digest=""):
    p = _Problems()
    p.unknown("", doc, SCHEMA["top"])

    name = doc.get("name", "experiment")
    if not isinstance(name, str) or not name or "/" in name or name in (".", ".."):
        p.add("name", f"must be a plain directory name, got {name!r}")
        name = "experiment"

    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        p.add("seeds", "must be a non-empty list of integers")
        seeds = []
    for i, s in enumerate(seeds):
        if not _is_int(s) or not 0 <= s <= U64_MAX:
            p.add(f"seeds[{i}]", f"must be an integer in [0, 2^64), got {s!r}")
    if len(set(seeds)) != len(seeds):
        p.add("seeds", "contains duplicates")

    record_every = doc.get("record_every", 1)
    if not _is_int(record_every) or record_every < 1:
        p.add("record_every", f"must be an integer >= 1, got {record_every!r}")
        record_every = 1

    objective = _parse_objective(p, doc.get("objective"), base_dir)
    topology = _parse_topology(p, doc.get("topology"))
    metric, threshold, max_rounds = _parse_target(p, doc.get("target"))
    algorithms = _parse_algorithms(p, doc.get("algorithms", []), metric)

    if p.items:
        raise ConfigError(p.items)
    cfg = ExperimentConfig(name, tuple(seeds), record_every, objective, topology, metric,
                           threshold, max_rounds, tuple(algorithms), base_dir, digest)
    _validate_against_modules(cfg)
    return cfg


def _parse_objective(p, table, base_dir):
    if not isinstance(table, dict):
        p.add("objective", "missing table")
        return {}
    family = table.get("family")
    if family not in ("quadratic", "ridge", "libsvm"):
        p.add("objective.family", f"must be quadratic, ridge or libsvm, got {family!r}")
        return dict(table)
    p.unknown("objective.", table, SCHEMA[f"objective.{family}"])
    _check_fields(p, "objective.", table)
    if family in ("quadratic", "ridge") and "dim" not in table:
        p.add("objective.dim", "required")
    if family == "ridge" and "rows" not in table:
        p.add("objective.rows", "required")
    if family == "libsvm":
        path = table.get("path")
        if not isinstance(path, str):
            p.add("objective.path", "required")
        elif not os.path.isfile(os.path.join(base_dir, path)):
            p.add("objective.path", f"file not found: {path}")
    if "link" in table and table["link"] not in LINKS:
        p.add("objective.link", f"must be one of {sorted(LINKS)}, got {table['link']!r}")
    if table.get("x0", "ones") not in ("ones", "zeros", "random"):
        p.add("objective.x0", f"must be ones, zeros or random, got {table['x0']!r}")
    if family == "quadratic" and _is_num(table.get("heterogeneity", 0)) and \
            not 0 <= table.get("heterogeneity", 0) < 1:
        p.add("objective.heterogeneity", "must lie in [0, 1)")
    return dict(table)


def _parse_topology(p, table):
    if not isinstance(table, dict):
        p.add("topology", "must be a table")
        return {"star": 1}
    p.unknown("topology.", table, SCHEMA["topology"])
    table = {k: v for k, v in table.items() if k in SCHEMA["topology"]}
    if len(table) != 1:
        p.add("topology", "must hold exactly one of star, ring or graph")
        return {"star": 1}
    (kind, value), = table.items()
    if kind in ("star", "ring"):
        if not _is_int(value) or value < 1:
            p.add(f"topology.{kind}", f"must be a positive machine count, got {value!r}")
    elif kind == "graph":
        if not isinstance(value, list) or not value or not all(
                isinstance(e, list) and len(e) == 2 and all(_is_int(v) and v >= 0 for v in e)
                for e in value):
            p.add("topology.graph", "must be a non-empty list of [i, j] node pairs")
    return dict(table)


def _parse_target(p, table):
    table = {} if table is None else table
    if not isinstance(table, dict):
        p.add("target", "must be a table")
        table = {}
    p.unknown("target.", table, SCHEMA["target"])
    metric = table.get("metric", "gap")
    if metric not in ("gap", "grad_norm"):
        p.add("target.metric", f"must be gap or grad_norm, got {metric!r}")
    threshold = table.get("threshold", 1e-6)
    if not _is_num(threshold) or threshold < 0:
        p.add("target.threshold", f"must be a nonnegative number, got {threshold!r}")
        threshold = 1e-6
    max_rounds = table.get("max_rounds", 10000)
    if not _is_int(max_rounds) or max_rounds < 0:
        p.add("target.max_rounds", f"must be a nonnegative integer, got {max_rounds!r}")
        max_rounds = 0
    return metric, float(threshold), max_rounds


def _parse_algorithms(p, items, metric):
    if not isinstance(items, list):
        p.add("algorithms", "must be an array of tables ([[algorithms]])")
        return []
    out, labels = [], set()
    for i, table in enumerate(items):
        prefix = f"algorithms[{i}]."
        if not isinstance(table, dict):
            p.add(f"algorithms[{i}]", "must be a table")
            continue
        name = table.get("name")
        if name not in ALGORITHMS:
            p.add(prefix + "name", f"must be one of {', '.join(ALGORITHMS)}, got {name!r}")
            continue
        p.unknown(prefix, table, SCHEMA[name])
        _check_fields(p, prefix, table)
        if (name == "core_gd_nc") != (metric == "grad_norm"):
            p.add(prefix + "name", f"{name} cannot run with target.metric = {metric!r} "
                                   "(core_gd_nc uses grad_norm, the others use gap)")
        if name == "gd_topk" and "k" not in table:
            p.add(prefix + "k", "required for gd_topk")
        label = table.get("label", name)
        if not isinstance(label, str) or not label.replace("_", "").replace("-", "").isalnum():
            p.add(prefix + "label", f"must be alphanumeric with - or _, got {label!r}")
            label = name
        settings = {k: v for k, v in table.items() if k not in ("name", "label", "step_size_grid")}
        grid = table.get("step_size_grid")
        if grid is not None:
            if "step_size" in table:
                p.add(prefix + "step_size_grid", "give step_size or step_size_grid, not both")
            if not isinstance(grid, list) or not grid or not all(_is_num(h) and h > 0 for h in grid):
                p.add(prefix + "step_size_grid", "must be a non-empty list of positive numbers")
                grid = []
            variants = [(f"{label}_h{h!r}", dict(settings, step_size=float(h))) for h in grid]
        else:
            variants = [(label, settings)]
        for lab, sett in variants:
            if lab in labels:
                p.add(prefix + "label", f"duplicate label {lab!r}; set a distinct label")
            labels.add(lab)
            out.append(AlgorithmSpec(lab, name, sett))
    return out


# ---------------------------------------------------------------- assembly

def build_topology(cfg):
    (kind, value), = cfg.topology.items()
    if kind == "star":
        return Topology.star(value)
    if kind == "ring":
        return Topology.ring(value)
    n = max(max(e) for e in value) + 1
    return Topology.graph(n, value)


def build_objective(cfg):
    """Objective sharded over the topology's machines, plus the start point."""
    o = cfg.objective
    n = build_topology(cfg).n
    family = o["family"]
    if family == "quadratic":
        spec = SpectrumSpec.power_decay(o["dim"], o.get("exponent", 2.0), o.get("mu"),
                                        o.get("rotation_seed"))
        obj = QuadraticObjective(spec, n, o.get("heterogeneity", 0.0), o.get("shard_seed", 0))
    else:
        if family == "ridge":
            B = synth_features(o["rows"], o["dim"], o.get("decay", 1.0), o.get("data_seed", 0))
            B = B * math.sqrt(o.get("R", 1.0))
            rng = np.random.default_rng(o.get("data_seed", 0) + 1)
            planted = rng.standard_normal(o["dim"]) / math.sqrt(o["dim"])
            y = B @ planted + o.get("noise", 0.1) * rng.standard_normal(o["rows"])
            if o.get("link", "square_loss") == "logistic":
                y = np.where(y >= 0, 1.0, -1.0)
            R = o.get("R", 1.0)
        else:
            ds = load_libsvm(os.path.join(cfg.base_dir, o["path"]), o.get("dim"))
            if "subsample" in o:
                ds = subsample(ds, o["subsample"], o.get("subsample_seed", 0))
            if "binarize" in o:
                ds = binarize(ds, o["binarize"])
            if o.get("normalize", True):
                ds = normalize_rows(ds)
            B, y, R = ds.to_dense(), ds.labels, None
        obj = RidgeSeparableObjective(B, y, o.get("link", "square_loss"), o.get("alpha", 0.0),
                                      n, o.get("shard_seed", 0), R)
        if obj.link != "bounded_nonconvex":
            obj.estimate_f_star()
    return obj, _start_point(o, obj.dim)


def _start_point(o, d):
    kind = o.get("x0", "ones")
    if kind == "zeros":
        x0 = np.zeros(d)
    elif kind == "ones":
        x0 = np.ones(d)
    else:
        x0 = np.random.default_rng(o.get("x0_seed", 0)).standard_normal(d)
    if "x0_norm" in o and kind != "zeros":
        x0 *= o["x0_norm"] / np.linalg.norm(x0)
    return x0


def build_run_config(cfg, spec, obj, x0):
    """Module config for one algorithm; raises ConfigError from the module's validation."""
    s = dict(spec.settings)
    max_rounds = s.pop("max_rounds", cfg.max_rounds)
    common = {"max_rounds": max_rounds, "record_every": cfg.record_every}
    if spec.name == "core_gd":
        return GdConfig.for_objective(obj, m=s.pop("m", None), target_gap=cfg.threshold,
                                      **common, **s)
    if spec.name == "core_agd":
        if not isinstance(obj, QuadraticObjective):
            raise ConfigError(["core_agd needs objective.family = quadratic"])
        m = s.pop("m", max(1, math.floor(obj.trace / obj.L)))
        return AgdConfig.for_objective(obj, m, target_gap=cfg.threshold, **common, **s)
    if spec.name == "core_gd_nc":
        if not isinstance(obj, RidgeSeparableObjective):
            raise ConfigError(["core_gd_nc needs objective.family = ridge or libsvm"])
        L, r1 = obj.smoothness, obj.trace_bound()
        m = s.pop("m", min(obj.dim, max(1, math.floor(r1 / L))))
        H = s.pop("H", None)
        if H is None:
            H = obj.hessian_lipschitz_estimate(200, scale=float(np.linalg.norm(x0)) or 1.0)
        Delta = s.pop("Delta", None)
        if Delta is None:
            Delta = obj.value(x0)  # every link is nonnegative, so f* >= 0
        s.pop("step_size", None)
        return NcConfig(m=m, r1=r1, H=H, L=L, Delta=Delta, eps=cfg.threshold, **common, **s)
    kind = {"gd_topk": "topk", "gd_quantize": "quantize"}.get(spec.name, "identity")
    if kind == "topk" and not s["k"] <= obj.dim:
        raise ConfigError([f"k={s['k']} exceeds dim={obj.dim}"])
    return BaselineConfig.for_objective(obj, target_gap=cfg.threshold, kind=kind, **common, **s)


def _validate_against_modules(cfg):
    """Construct the objective, topology and every module config before any run."""
    problems = []
    try:
        topology = build_topology(cfg)
    except CoreError as exc:
        raise ConfigError([f"topology: {exc}"]) from None
    if topology.kind == "graph" and not topology.connected:
        problems.append("topology.graph: graph is disconnected")
    try:
        obj, x0 = build_objective(cfg)
    except ConfigError as exc:
        raise ConfigError([f"objective: {q}" for q in exc.problems]) from None
    except (CoreError, OSError) as exc:
        raise ConfigError([f"objective: {exc}"]) from None
    for i, spec in enumerate(cfg.algorithms):
        where = f"algorithms[{i}] ({spec.label})"
        if spec.name not in ("core_gd",) and topology.kind != "star":
            problems.append(f"{where}: only core_gd runs on ring or graph topologies")
        if spec.name == "core_gd_nc" and "step_size" in spec.settings:
            problems.append(f"{where}.step_size: core_gd_nc derives its step size; remove it")
        try:
            build_run_config(cfg, spec, obj, x0)
        except ConfigError as exc:
            problems.extend(f"{where}: {q}" for q in exc.problems)
        except (CoreError, TypeError) as exc:
            problems.append(f"{where}: {exc}")
    if problems:
        raise ConfigError(problems)
