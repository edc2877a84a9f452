"""Command line: generate populations, match them, score them, run κ sweeps.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import DegenerateBandwidthError, population_hash
from .assignment import AssignmentFormatError, read_triplets, write_triplets
from .evaluation import (METRIC_COLUMNS, PopulationMismatchError, population_report, write_metrics_csv,
                         write_node_detail)
from .graphs import GraphFormatError, load_population, pad_with_dummies, save_population
from .multigraph import SynchronizationError
from .pipeline import METHODS, UnknownMethodError, method_params, prepare, run_multigraph, run_pairwise
from .sphere import DomainError
from .synth import GenerationParams, GeometryError, generate_population

log = logging.getLogger("sulcal_match")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


# -- configuration -----------------------------------------------------------

@dataclass
class BenchmarkConfig:
    n_graphs: int = 137
    n_ref: int = 88
    mu_pert: float = 12.0
    sigma_pert: float = 4.0
    p: float = 0.10
    nu: int = 30
    trials: int = 10_000
    kappas: list = field(default_factory=lambda: [100.0, 200.0, 400.0, 1000.0])
    repetitions: int = 10
    methods: list = field(default_factory=lambda: list(METHODS))
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.kappas = [float(k) for k in self.kappas]
        if not self.kappas or any(not k > 0 for k in self.kappas):
            raise ConfigError(f"kappa values must be positive, got {self.kappas}")
        if int(self.repetitions) < 1:
            raise ConfigError("repetitions must be >= 1")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        for m, over in self.params.items():
            try:
                method_params(m, over)
            except UnknownMethodError as exc:
                raise ConfigError(str(exc)) from None
        try:
            self.generation(self.kappas[0], 0)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def method_params(self, method: str) -> dict:
        return method_params(method, self.params.get(method))

    def population_seed(self, repetition: int) -> int:
        # one stream per repetition, shared across κ: populations of the same
        # repetition differ only through the perturbation concentration
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(repetition),))
        return int(ss.generate_state(1, dtype=np.uint32)[0])

    def generation(self, kappa: float, repetition: int) -> GenerationParams:
        return GenerationParams(n_graphs=int(self.n_graphs), n_ref=int(self.n_ref), kappa=float(kappa),
                                mu_pert=float(self.mu_pert), sigma_pert=float(self.sigma_pert),
                                p=float(self.p), nu=int(self.nu), trials=int(self.trials),
                                seed=self.population_seed(repetition))

    def canonical(self) -> dict:
        d = asdict(self)
        d["params"] = {m: self.method_params(m) for m in METHODS}
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _read_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.endswith((".yaml", ".yml")):
            import yaml
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
    except Exception as exc:  # parser-specific error types
        raise ConfigError(f"{path}: cannot parse config ({exc})") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return doc


def build_config(args) -> BenchmarkConfig:
    doc = _read_config_file(args.config) if getattr(args, "config", None) else {}
    known = {f.name for f in fields(BenchmarkConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    overrides = {
        "seed": args.seed, "n_graphs": args.n_graphs, "n_ref": args.n_ref, "mu_pert": args.mu_pert,
        "sigma_pert": args.sigma_pert, "p": args.edge_del_p, "kappas": args.kappa,
        "repetitions": getattr(args, "repetitions", None),
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "method", None):
        doc["methods"] = [m.strip() for m in args.method.split(",")]
    params = {m: dict(v) for m, v in (doc.get("params") or {}).items()}
    for item in getattr(args, "param", None) or []:
        key, _, value = item.partition("=")
        method, _, name = key.partition(".")
        if not name or not value:
            raise ConfigError(f"--param expects METHOD.NAME=VALUE, got {item!r}")
        params.setdefault(method, {})[name] = value
    doc["params"] = params
    try:
        return BenchmarkConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# -- helpers -----------------------------------------------------------------

def _stamp(cfg: BenchmarkConfig) -> dict:
    return {"config_hash": cfg.hash(), "version": __version__}


def _write_json(path: Path, doc: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default))
    os.replace(tmp, path)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def population_name(kappa: float, repetition: int) -> str:
    return f"k{kappa:g}_r{repetition}"


def _generate_one(cfg: BenchmarkConfig, kappa: float, rep: int, out: Path) -> Path:
    path = out / f"{population_name(kappa, rep)}.json"
    pop, truth = generate_population(cfg.generation(kappa, rep))
    pop.provenance.update(_stamp(cfg), population_id=population_name(kappa, rep), repetition=rep)
    save_population(pop, truth, path)
    return path


def _kappa_of(pop) -> float | None:
    k = pop.provenance.get("params", {}).get("kappa")
    return float(k) if k is not None else None


def _match(pop, cfg: BenchmarkConfig, method: str, init_path: Path | None = None):
    """Run ``method`` on a population; multi-graph methods start from pairwise."""
    padded, bw = prepare(pop)
    pw = None
    if method == "pairwise" or init_path is None:
        pw = run_pairwise(padded, bw, cfg.method_params("pairwise"))
        init = pw.bulk
    else:
        init = read_triplets(init_path, len(pop), padded.n_max)
    run = pw if method == "pairwise" else run_multigraph(method, padded, bw, init, cfg.method_params(method))
    return padded, bw, run, pw


def _method_meta(cfg, pop, padded, bw, run, pairwise_seconds: float) -> dict:
    return {
        "method": run.method, "params": run.params, "meta": run.meta,
        "seconds": run.seconds, "pairwise_seconds": pairwise_seconds,
        "n_graphs": len(pop), "n_max": padded.n_max, "real_sizes": padded.real_sizes.tolist(),
        "gamma_v": bw.gamma_v, "gamma_e": bw.gamma_e, "bandwidth_meta": bw.meta,
        "population_hash": population_hash(pop), "population_id": pop.provenance.get("population_id"),
        "kappa": _kappa_of(pop), **_stamp(cfg),
    }


# -- commands ----------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kappa in cfg.kappas:
        for rep in range(cfg.repetitions):
            path = _generate_one(cfg, kappa, rep, out)
            log.info("wrote %s", path)
    return EXIT_OK


def cmd_match(args) -> int:
    cfg = build_config(args)
    method = args.method or "pairwise"
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    pop, _ = load_population(args.population)
    if len(pop) < 2:
        raise ConfigError("matching needs at least 2 graphs")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.population).stem
    padded, bw, run, pw = _match(pop, cfg, method, Path(args.init) if args.init else None)
    if pw is not None and method != "pairwise":
        write_triplets(pw.bulk, padded.real_sizes, out / f"{stem}.pairwise.csv")
        _write_json(out / f"{stem}.pairwise.meta.json", _method_meta(cfg, pop, padded, bw, pw, 0.0))
    path = out / f"{stem}.{method}.csv"
    write_triplets(run.bulk, padded.real_sizes, path)
    pw_seconds = pw.seconds if pw is not None and method != "pairwise" else 0.0
    _write_json(out / f"{stem}.{method}.meta.json", _method_meta(cfg, pop, padded, bw, run, pw_seconds))
    if method == "msync":
        c = run.meta["consistency"]
        if abs(c - 1.0) > 1e-12:
            raise SolverError(f"mSync output consistency {c!r} != 1")
        log.info("mSync consistency check passed")
    log.info("wrote %s", path)
    return EXIT_OK


def evaluate_bulk(pop, truth, bulk, cfg, method, seconds, population_id=None, repetition=None):
    report = population_report(bulk, pop, truth, wall_seconds=seconds)
    row = {"population_id": population_id or pop.provenance.get("population_id", ""),
           "method": method, "kappa": _kappa_of(pop),
           "repetition": repetition if repetition is not None else pop.provenance.get("repetition"),
           **report.metrics_row(), **_stamp(cfg)}
    return report, row


def cmd_eval(args) -> int:
    cfg = build_config(args)
    pop, truth = load_population(args.population)
    padded = pad_with_dummies(pop)
    bulk = read_triplets(args.assignments, len(pop), padded.n_max)
    meta_path = Path(str(args.assignments)[: -len(".csv")] + ".meta.json") if str(args.assignments).endswith(".csv") else None
    method, seconds = args.method or "", math.nan
    if meta_path is not None and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        method = method or meta.get("method", "")
        seconds = float(meta.get("seconds", math.nan)) + float(meta.get("pairwise_seconds", 0.0))
    report, row = evaluate_bulk(pop, truth, bulk, cfg, method, seconds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.assignments).stem
    write_metrics_csv([row], out / f"{stem}.metrics.csv")
    write_node_detail(report, pop, out / f"{stem}.nodes.csv", _stamp(cfg))
    log.info("wrote %s", out / f"{stem}.metrics.csv")
    return EXIT_OK


def _cell_path(out: Path, pid: str, method: str) -> Path:
    return out / "cells" / f"{pid}.{method}.json"


def run_population_cells(cfg: BenchmarkConfig, kappa: float, rep: int, out: str) -> list[dict]:
    """Generate (or reload) one population and fill every missing method cell."""
    out = Path(out)
    pid = population_name(kappa, rep)
    todo = [m for m in cfg.methods if not _cell_path(out, pid, m).exists()]
    if not todo:
        return []
    pop_path = out / "populations" / f"{pid}.json"
    if not pop_path.exists():
        _generate_one(cfg, kappa, rep, pop_path.parent)
    pop, truth = load_population(pop_path)
    padded, bw = prepare(pop)
    init_path = out / "assignments" / f"{pid}.pairwise.csv"
    init_meta = out / "assignments" / f"{pid}.pairwise.meta.json"
    if init_path.exists() and init_meta.exists():
        init = read_triplets(init_path, len(pop), padded.n_max)
        pw_seconds = float(json.loads(init_meta.read_text())["seconds"])
        pw = None
    else:
        pw = run_pairwise(padded, bw, cfg.method_params("pairwise"))
        init, pw_seconds = pw.bulk, pw.seconds
        write_triplets(init, padded.real_sizes, init_path)
        _write_json(init_meta, _method_meta(cfg, pop, padded, bw, pw, 0.0))
    rows = []
    for method in todo:
        if method == "pairwise":
            bulk, seconds = init, pw_seconds
        else:
            run = run_multigraph(method, padded, bw, init, cfg.method_params(method))
            bulk, seconds = run.bulk, pw_seconds + run.seconds
            write_triplets(bulk, padded.real_sizes, out / "assignments" / f"{pid}.{method}.csv")
            _write_json(out / "assignments" / f"{pid}.{method}.meta.json",
                        _method_meta(cfg, pop, padded, bw, run, pw_seconds))
        _, row = evaluate_bulk(pop, truth, bulk, cfg, method, seconds, pid, rep)
        row["kappa"] = kappa
        _write_json(_cell_path(out, pid, method), row)
        rows.append(row)
    return rows


def aggregate(rows: list[dict], kappas, methods) -> list[dict]:
    """Mean and std (population, ddof=0) of every metric per (κ, method)."""
    out = []
    for kappa in kappas:
        for method in methods:
            sel = [r for r in rows if r["method"] == method and float(r["kappa"]) == float(kappa)]
            if not sel:
                continue
            agg = {"kappa": kappa, "method": method, "n": len(sel)}
            for c in METRIC_COLUMNS:
                vals = np.array([np.nan if r.get(c) in (None, "") else float(r[c]) for r in sel])
                ok = ~np.isnan(vals)
                agg[f"{c}_mean"] = float(vals[ok].mean()) if ok.any() else None
                agg[f"{c}_std"] = float(vals[ok].std()) if ok.any() else None
            out.append(agg)
    return out


def _write_summary(aggs: list[dict], path: Path, stamp: dict) -> None:
    cols = ["kappa", "method", "n"] + [f"{c}_{s}" for c in METRIC_COLUMNS for s in ("mean", "std")] + list(stamp)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for a in aggs:
            a = {**a, **stamp}
            w.writerow(["" if a.get(c) is None else (repr(a[c]) if isinstance(a[c], float) else a[c]) for c in cols])
    os.replace(tmp, path)


def cmd_benchmark(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    for sub in ("populations", "assignments", "cells"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {**cfg.canonical(), **_stamp(cfg)})
    jobs = [(k, r) for k in cfg.kappas for r in range(cfg.repetitions)]
    workers = max(1, int(args.workers or 1))
    failures = []
    if workers == 1:
        for k, r in jobs:
            try:
                run_population_cells(cfg, k, r, str(out))
            except Exception as exc:  # keep finished cells, report at the end
                failures.append((k, r, exc))
                log.error("cell kappa=%g rep=%d failed: %s", k, r, exc)
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = {ex.submit(run_population_cells, cfg, k, r, str(out)): (k, r) for k, r in jobs}
            for fut, (k, r) in futs.items():
                try:
                    fut.result()
                except Exception as exc:
                    failures.append((k, r, exc))
                    log.error("cell kappa=%g rep=%d failed: %s", k, r, exc)
    rows = []
    for k, r in jobs:
        for m in cfg.methods:
            p = _cell_path(out, population_name(k, r), m)
            if p.exists():
                rows.append(json.loads(p.read_text()))
    order = {m: i for i, m in enumerate(cfg.methods)}
    rows.sort(key=lambda r: (cfg.kappas.index(float(r["kappa"])), r["repetition"], order[r["method"]]))
    write_metrics_csv(rows, out / "metrics.csv")
    _write_summary(aggregate(rows, cfg.kappas, cfg.methods), out / "summary.csv", _stamp(cfg))
    log.info("wrote %s (%d rows)", out / "metrics.csv", len(rows))
    if failures:
        raise failures[0][2]
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or YAML benchmark config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--method", help=f"one of {', '.join(METHODS)} (comma list for benchmark)")
    p.add_argument("--kappa", type=_float_list, help="comma-separated κ values")
    p.add_argument("--n-graphs", type=int)
    p.add_argument("--n-ref", type=int)
    p.add_argument("--mu-pert", type=float)
    p.add_argument("--sigma-pert", type=float)
    p.add_argument("--edge-del-p", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--param", action="append", metavar="METHOD.NAME=VALUE",
                   help="override a method hyperparameter, e.g. mals.threshold=0.7")
    p.add_argument("-v", "--verbose", action="store_true")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sulcal-match", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", help="write synthetic populations with ground truth")
    _common(g)
    g.add_argument("--repetitions", type=int)
    m = sub.add_parser("match", help="match one population")
    _common(m)
    m.add_argument("population")
    m.add_argument("--init", help="pairwise triplet file to start multi-graph methods from")
    e = sub.add_parser("eval", help="score an assignment file")
    _common(e)
    e.add_argument("population")
    e.add_argument("assignments")
    b = sub.add_parser("benchmark", help="generate, match and score a κ sweep")
    _common(b)
    b.add_argument("--repetitions", type=int)
    return parser


COMMANDS = {"generate": cmd_generate, "match": cmd_match, "eval": cmd_eval, "benchmark": cmd_benchmark}


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnknownMethodError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, GraphFormatError, AssignmentFormatError, PopulationMismatchError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, SynchronizationError, GeometryError, DegenerateBandwidthError,
            np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
