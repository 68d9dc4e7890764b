"""The ``bench`` command line for the CORE benchmark harness.

Exit codes: 0 success, 1 a checked claim failed, 2 usage, config or input error.
Outputs of ``bench run`` go to ``$COREOPT_BENCH_OUT/<config name>/`` (default
root ``./bench_out``)::

    runs/<label>_seed<s>.csv      trajectory rows (round, floats, f_gap, grad_norm, step_size)
    ledgers/<label>_seed<s>.csv   per-round floats (round, uplink, downlink, gossip)
    cells.csv                     one line per (algorithm, seed) with status and ledger check
    summary.csv                   floats- and rounds-to-target per algorithm, mean and std
    manifest.json                 config hash, seeds, versions, backend and file hashes
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import re
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from . import __version__, kernels
from .config import U64_MAX, build_objective, build_run_config, build_topology, load_config
from .datasets import load_libsvm, normalize_rows, serialize
from .errors import ConfigError, LibsvmParseError
from .optimizers import (communication_report, run_cagd, run_cgd, run_compressed_gd,
                         run_core_agd, run_core_gd, run_core_gd_nonconvex)
from .simnet import gossip_iterations
from .verify import FAST_SUITES, SUITES, run_suite

EXIT_OK, EXIT_CLAIM, EXIT_USAGE = 0, 1, 2
OUT_ENV = "COREOPT_BENCH_OUT"

RUNNERS = {
    "core_gd": run_core_gd,
    "core_agd": run_core_agd,
    "core_gd_nc": run_core_gd_nonconvex,
    "cgd": run_cgd,
    "cagd": run_cagd,
    "gd_topk": run_compressed_gd,
    "gd_quantize": run_compressed_gd,
}

SUMMARY_COLUMNS = ("algorithm", "runs", "converged", "diverged", "max_rounds", "status",
                   "floats_to_target_mean", "floats_to_target_std", "rounds_to_target_mean",
                   "rounds_to_target_std", "total_floats_mean", "ratio_vs_reference",
                   "ledger_check")
CELL_COLUMNS = ("algorithm", "seed", "status", "rounds_run", "target_round", "target_floats",
                "total_floats", "analytic_floats", "ledger_check")


# ---------------------------------------------------------------- helpers

def parse_u64(text):
    """Decimal unsigned 64-bit integer (no sign, no underscores, no hex)."""
    if not re.fullmatch(r"[0-9]+", text) or int(text) > U64_MAX:
        raise argparse.ArgumentTypeError(f"expected a decimal integer in [0, 2^64), got {text!r}")
    return int(text)


def _positive_int(text):
    if not re.fullmatch(r"[0-9]+", text) or int(text) < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(text)


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to ``path`` via a same-directory rename."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def output_root():
    return os.environ.get(OUT_ENV) or "bench_out"


# ---------------------------------------------------------------- accounting

def analytic_floats(name, run_cfg, topology, d, rounds):
    """Ledger total predicted from the protocol alone, for ``rounds`` executed rounds."""
    n = topology.n
    if name in ("core_gd", "core_agd"):
        if topology.kind == "star":
            return rounds * 2 * n * run_cfg.m
        iters = run_cfg.gossip_iters
        if iters is None:
            iters = gossip_iterations(run_cfg.gossip_tol, topology.eigengap,
                                      run_cfg.accelerated_gossip)
        return rounds * run_cfg.m * 2 * topology.n_edges * iters
    if name == "core_gd_nc":
        return rounds * (2 * n * run_cfg.m + 2 * n)
    if name in ("cgd", "cagd"):
        return rounds * 2 * n * d
    if name == "gd_topk":
        return rounds * 2 * n * 2 * run_cfg.k
    if name == "gd_quantize":
        return rounds * 2 * n * (1 + -(-d // 32))
    raise ValueError(name)


# ---------------------------------------------------------------- cell execution

_WORKER = {}


def _init_worker(cfg):
    obj, x0 = build_objective(cfg)
    _WORKER.update(cfg=cfg, obj=obj, x0=x0, topology=build_topology(cfg))


def _run_cell(cell, out_dir):
    cfg, obj, x0, topology = (_WORKER[k] for k in ("cfg", "obj", "x0", "topology"))
    spec = cfg.algorithms[cell.index]
    run_cfg = build_run_config(cfg, spec, obj, x0)
    record = RUNNERS[spec.name](obj, run_cfg, cell.seed, topology, x0)
    stem = f"{spec.label}_seed{cell.seed}"
    buf = io.StringIO()
    record.write_csv(buf)
    atomic_write(os.path.join(out_dir, "runs", stem + ".csv"), buf.getvalue())
    buf = io.StringIO()
    record.ledger.write_csv(buf)
    atomic_write(os.path.join(out_dir, "ledgers", stem + ".csv"), buf.getvalue())
    rounds = record.rounds_run
    expected = analytic_floats(spec.name, run_cfg, topology, obj.dim, rounds)
    total = record.total_floats
    last_row = record.rows[-1][1] if record.rows else 0
    check = "ok" if total == expected == last_row else "mismatch"
    return {"algorithm": spec.label, "seed": cell.seed, "status": record.status,
            "rounds_run": rounds, "target_round": record.target_round,
            "target_floats": record.target_floats, "total_floats": total,
            "analytic_floats": expected, "ledger_check": check}


class _Outcome:
    """Minimal RunRecord stand-in for :func:`communication_report`."""

    def __init__(self, row):
        self.algorithm = row["algorithm"]
        self.target_floats = row["target_floats"]
        self.target_round = row["target_round"]


def summarize(cfg, results):
    by_label = {spec.label: [] for spec in cfg.algorithms}
    for r in results:
        by_label[r["algorithm"]].append(r)
    report = {row.algorithm: row for row in communication_report(_Outcome(r) for r in results)}
    rows = []
    for label, runs in by_label.items():
        counts = {s: sum(r["status"] == s for r in runs) for s in ("converged", "diverged",
                                                                    "max_rounds")}
        status = "|".join(sorted({r["status"] for r in runs}))
        rep = report.get(label)
        check = "ok" if all(r["ledger_check"] == "ok" for r in runs) else "mismatch"
        rows.append([label, len(runs), counts["converged"], counts["diverged"], counts["max_rounds"],
                     status,
                     *(_fmt(getattr(rep, f, math.nan)) for f in
                       ("floats_mean", "floats_std", "rounds_mean", "rounds_std")),
                     _fmt(float(np.mean([r["total_floats"] for r in runs]))),
                     _fmt(getattr(rep, "ratio_vs_reference", math.nan)), check])
    return rows


def run_experiment(cfg, out_dir, jobs=1):
    """Run every cell, write all artifacts and return the per-cell result dicts."""
    cells = cfg.cells()
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(cfg,)) as pool:
            results = list(pool.map(_run_cell, cells, [out_dir] * len(cells)))
    else:
        if cells:
            _init_worker(cfg)
        results = [_run_cell(c, out_dir) for c in cells]
    files = {}
    cell_text = _csv_text(CELL_COLUMNS, [[_fmt(r[c]) for c in CELL_COLUMNS] for r in results])
    summary_text = _csv_text(SUMMARY_COLUMNS, summarize(cfg, results))
    atomic_write(os.path.join(out_dir, "cells.csv"), cell_text)
    atomic_write(os.path.join(out_dir, "summary.csv"), summary_text)
    files["cells.csv"] = cell_text.encode()
    files["summary.csv"] = summary_text.encode()
    for r in results:
        stem = f"{r['algorithm']}_seed{r['seed']}.csv"
        for sub in ("runs", "ledgers"):
            with open(os.path.join(out_dir, sub, stem), "rb") as fh:
                files[f"{sub}/{stem}"] = fh.read()
    manifest = {
        "config": {"name": cfg.name, "sha256": cfg.digest},
        "seeds": list(cfg.seeds),
        "algorithms": [{"label": a.label, "name": a.name} for a in cfg.algorithms],
        "backend": kernels.BACKEND,
        "versions": {"coreopt": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "files": {k: hashlib.sha256(v).hexdigest() for k, v in sorted(files.items())},
    }
    atomic_write(os.path.join(out_dir, "manifest.json"),
                 json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return results


# ---------------------------------------------------------------- subcommands

def cmd_run(args):
    seeds = {s for s in (args.seed_override, args.seed) if s is not None}
    if len(seeds) > 1:
        print("error: --seed and --seed-override disagree", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error in {args.config}:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_USAGE
    if seeds:
        cfg = cfg.with_seeds(sorted(seeds))
    out_dir = os.path.join(output_root(), cfg.name)
    results = run_experiment(cfg, out_dir, args.jobs)
    with open(os.path.join(out_dir, "summary.csv"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    print(f"wrote {len(results)} runs to {out_dir}")
    bad = [r for r in results if r["ledger_check"] != "ok"]
    for r in bad:
        print(f"FAIL ledger {r['algorithm']} seed {r['seed']}: recorded {r['total_floats']} "
              f"!= analytic {r['analytic_floats']}", file=sys.stderr)
    return EXIT_CLAIM if bad else EXIT_OK


def cmd_verify(args):
    if args.suite != "all" and args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; choose from all, "
              f"{', '.join(sorted(SUITES))}", file=sys.stderr)
        return EXIT_USAGE
    claims = run_suite(args.suite)
    for claim in claims:
        print(claim.line(), flush=True)
    failed = sum(not c.passed for c in claims)
    print(f"{len(claims) - failed}/{len(claims)} claims passed")
    return EXIT_CLAIM if failed else EXIT_OK


def cmd_parse_libsvm(args):
    try:
        ds = load_libsvm(args.path, args.dim)
    except OSError as exc:
        print(f"error: {args.path}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except LibsvmParseError as exc:
        print(f"error: {args.path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.normalize:
        ds = normalize_rows(ds)
    norms = ds.row_norms()
    labels = np.unique(ds.labels)
    print(f"rows: {ds.n_rows}")
    print(f"dim: {ds.dim}")
    print(f"nonzeros: {len(ds.values)}")
    if ds.n_rows:
        print(f"labels: {len(labels)} distinct in [{float(labels[0])!r}, {float(labels[-1])!r}]")
        print(f"row norms: min {float(norms.min())!r} max {float(norms.max())!r}")
    print(f"normalized: {'yes' if args.normalize else 'no'}")
    if args.output:
        atomic_write(args.output, serialize(ds))
        print(f"wrote {args.output}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bench", description="Benchmark harness for CORE gradient compression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True, help="path to a TOML experiment config")
    run.add_argument("--seed-override", type=parse_u64, metavar="N",
                     help="replace the config's seed list with N")
    run.add_argument("--seed", type=parse_u64, metavar="N", help="alias of --seed-override")
    run.add_argument("--jobs", type=_positive_int, default=1, metavar="J",
                     help="worker processes (results do not depend on J)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="check lemma and theorem claims numerically")
    ver.add_argument("suite", help=f"suite name or 'all' ({', '.join(FAST_SUITES)})")
    ver.set_defaults(func=cmd_verify)

    lib = sub.add_parser("parse-libsvm", help="parse and summarize a LibSVM file")
    lib.add_argument("path")
    lib.add_argument("--normalize", action="store_true", help="scale rows to unit norm")
    lib.add_argument("--dim", type=_positive_int, help="declared feature dimension")
    lib.add_argument("--output", help="write the (normalized) dataset back as LibSVM text")
    lib.set_defaults(func=cmd_parse_libsvm)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return exc.code
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
