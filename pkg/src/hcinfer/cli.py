"""Command-line entry point: ``hcinfer <command> [flags]``.

Settings come from built-in defaults, then an optional JSON/YAML config
file, then ``HCINFER_*`` environment variables (nested keys joined with a
double underscore, e.g. ``HCINFER_POWELL__FTOL=1e-4``), then flags.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import empirical as emp
from . import rng as rngmod
from .cascade import BaselineModel, SpreadParams, simulate_hidden_cascade
from .classify import KINDS, ClassifierSpec
from .features import (
    OBSERVED,
    SIMULATED,
    STAT_KINDS,
    generate_feature_set,
    symptom_distribution_report,
)
from .graph import (
    Graph,
    GraphError,
    SeedSchedule,
    dump_edge_list,
    gen_balanced_tree,
    gen_barabasi_albert,
    gen_star,
    hop_distances,
    load_edge_list,
)
from .optimize import SyntheticProblem, replicate
from .powell import PowellConfig

log = logging.getLogger("hcinfer")

ENV_PREFIX = "HCINFER_"
GRID_HEADER = ("p", "q", "p_hat_mean", "p_hat_std", "q_hat_mean", "q_hat_std", "mse_mean",
               "ca_mean", "evals", "wall_seconds")
GENERATORS = ("barabasi_albert", "balanced_tree", "star", "edge_list")

DEFAULTS: dict[str, Any] = {
    "graph": {"generator": "barabasi_albert", "n": 200, "m": 2, "graph_seed": 0,
              "branching": 2, "height": 7, "leaves": 10, "path": None},
    "seeds": [0],
    "truth": None,
    "baseline": [0.5, 0.25, 0.25],
    "m": 50,
    "n": 100,
    "stat": "reduced",
    "classifier": {"kind": "svm", "params": {}, "tune": True},
    "powell": {"ftol": 1e-3, "xtol": 1e-2, "max_iterations": 50, "start": [0.5, 0.5],
               "restart_cap": 3},
    "repeats": 1,
    "seed": 0,
    "grid": {"points": [[0.1, 0.1], [0.5, 0.5], [0.9, 0.9], [0.3, 0.7], [0.7, 0.3]]},
    "report": {"theta": None, "samples": 200, "bins": 20},
    "empirical": {
        "investors": 100, "announcements": 60, "gap": 15,
        "theta_announcement": [0.5, 0.6], "theta_non_announcement": [0.25, 0.6],
        "bootstrap": 50, "width": None, "trades": None, "calendar": None, "baselines": None,
        "company": "company",
    },
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


# ---------------------------------------------------------------- config

def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _env_overrides(environ) -> dict:
    out: dict = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = _scalar(raw)
    return out


def _scalar(raw: str):
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        # YAML reads "1e-4" as text; accept it as a number
        try:
            return float(value)
        except ValueError:
            pass
    return value


def load_config(path: str | None, args: argparse.Namespace | None = None, environ=None) -> dict:
    """Resolve defaults, file, environment and flags into one config dict."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from None
        loaded = yaml.safe_load(text) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(["config: top level must be a mapping"])
        cfg = _merge(cfg, loaded)
    cfg = _merge(cfg, _env_overrides(os.environ if environ is None else environ))
    if args is not None:
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.stat is not None:
            cfg["stat"] = args.stat
        if args.classifier is not None:
            cfg["classifier"]["kind"] = args.classifier
    validate_config(cfg)
    return cfg


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_prob(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and 0.0 <= v <= 1.0


def _check_pair(problems, name, value):
    if not (isinstance(value, (list, tuple)) and len(value) == 2 and all(map(_is_prob, value))):
        problems.append(f"{name}: expected [p, q] with both in [0, 1], got {value!r}")


def validate_config(cfg: dict) -> None:
    """Raise ConfigError listing every invalid field."""
    problems: list[str] = []
    g = cfg["graph"]
    if g.get("generator") not in GENERATORS:
        problems.append(f"graph.generator: must be one of {GENERATORS}, got {g.get('generator')!r}")
    elif g["generator"] == "edge_list":
        if not g.get("path"):
            problems.append("graph.path: required for the edge_list generator")
        elif not Path(g["path"]).is_file():
            problems.append(f"graph.path: no such file {g['path']!r}")
    for key in ("n", "m", "branching", "height", "leaves"):
        if not (_is_int(g.get(key)) and g[key] >= 1):
            problems.append(f"graph.{key}: must be a positive integer, got {g.get(key)!r}")
    if not (_is_int(g.get("graph_seed")) and g["graph_seed"] >= 0):
        problems.append(f"graph.graph_seed: must be a nonnegative integer, got {g.get('graph_seed')!r}")
    seeds = cfg["seeds"]
    if not (isinstance(seeds, list) and seeds and all(_is_int(s) and s >= 0 for s in seeds)):
        problems.append(f"seeds: must be a non-empty list of node ids, got {seeds!r}")
    elif len(set(seeds)) != len(seeds):
        problems.append("seeds: node ids must be distinct")
    if cfg["truth"] is not None:
        _check_pair(problems, "truth", cfg["truth"])
    b = cfg["baseline"]
    if not (isinstance(b, (list, tuple)) and len(b) == 3 and all(map(_is_prob, b))
            and abs(sum(b) - 1.0) <= 1e-12):
        problems.append(f"baseline: expected [b0, b1, b2] in [0, 1] summing to 1, got {b!r}")
    for key in ("m", "n", "repeats"):
        if not (_is_int(cfg[key]) and cfg[key] >= 1):
            problems.append(f"{key}: must be a positive integer, got {cfg[key]!r}")
    if _is_int(cfg["m"]) and cfg["m"] < 5:
        problems.append(f"m: at least 5 feature rows per entity are needed, got {cfg['m']}")
    if cfg["stat"] not in STAT_KINDS:
        problems.append(f"stat: must be one of {STAT_KINDS}, got {cfg['stat']!r}")
    if not (_is_int(cfg["seed"]) and cfg["seed"] >= 0):
        problems.append(f"seed: must be a nonnegative integer, got {cfg['seed']!r}")
    c = cfg["classifier"]
    if c.get("kind") not in KINDS:
        problems.append(f"classifier.kind: must be one of {KINDS}, got {c.get('kind')!r}")
    else:
        try:
            ClassifierSpec.make(c["kind"], c.get("params") or {})
        except ValueError as exc:
            problems.append(f"classifier.params: {exc}")
    if not isinstance(c.get("tune"), bool):
        problems.append(f"classifier.tune: must be true or false, got {c.get('tune')!r}")
    pw = cfg["powell"]
    for key in ("ftol", "xtol"):
        v = pw.get(key)
        if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0):
            problems.append(f"powell.{key}: must be positive, got {v!r}")
    for key, lo in (("max_iterations", 1), ("restart_cap", 0)):
        if not (_is_int(pw.get(key)) and pw[key] >= lo):
            problems.append(f"powell.{key}: must be an integer >= {lo}, got {pw.get(key)!r}")
    _check_pair(problems, "powell.start", pw.get("start"))
    pts = cfg["grid"].get("points")
    if not (isinstance(pts, list) and pts):
        problems.append("grid.points: must be a non-empty list of [p, q] pairs")
    else:
        for i, pt in enumerate(pts):
            _check_pair(problems, f"grid.points[{i}]", pt)
    r = cfg["report"]
    if r.get("theta") is not None:
        _check_pair(problems, "report.theta", r["theta"])
    for key in ("samples", "bins"):
        if not (_is_int(r.get(key)) and r[key] >= 1):
            problems.append(f"report.{key}: must be a positive integer, got {r.get(key)!r}")
    e = cfg["empirical"]
    for key in ("investors", "announcements", "gap", "bootstrap"):
        if not (_is_int(e.get(key)) and e[key] >= 1):
            problems.append(f"empirical.{key}: must be a positive integer, got {e.get(key)!r}")
    if e.get("width") is not None and not (_is_int(e["width"]) and e["width"] >= 1):
        problems.append(f"empirical.width: must be a positive integer, got {e['width']!r}")
    for key in ("theta_announcement", "theta_non_announcement"):
        _check_pair(problems, f"empirical.{key}", e.get(key))
    for key in ("trades", "calendar", "baselines"):
        if e.get(key) is not None and not Path(e[key]).is_file():
            problems.append(f"empirical.{key}: no such file {e[key]!r}")
    if problems:
        raise ConfigError(problems)


# ---------------------------------------------------------------- builders

def build_graph(cfg: dict) -> Graph:
    g = cfg["graph"]
    gen = g["generator"]
    if gen == "barabasi_albert":
        return gen_barabasi_albert(g["n"], g["m"], g["graph_seed"])
    if gen == "balanced_tree":
        return gen_balanced_tree(g["branching"], g["height"])
    if gen == "star":
        return gen_star(g["leaves"])
    with open(g["path"]) as fh:
        return load_edge_list(fh)


def build_problem(cfg: dict, graph: Graph, truth) -> SyntheticProblem:
    pw = cfg["powell"]
    c = cfg["classifier"]
    return SyntheticProblem(
        graph=graph,
        seeds=SeedSchedule.staggered(cfg["seeds"]),
        baseline=BaselineModel(np.tile(cfg["baseline"], (graph.node_count, 1))),
        truth=SpreadParams(*truth),
        m=cfg["m"], n=cfg["n"], kind=cfg["stat"],
        classifier=ClassifierSpec.make(c["kind"], c.get("params") or {}),
        start=tuple(pw["start"]),
        powell=PowellConfig(pw["ftol"], pw["xtol"], pw["max_iterations"]),
        restart_cap=pw["restart_cap"],
        tune=c["tune"],
    )


def _require_truth(cfg: dict) -> tuple[float, float]:
    if cfg["truth"] is None:
        raise ConfigError(["truth: this command needs [p, q]"])
    return tuple(cfg["truth"])


# ---------------------------------------------------------------- output

def atomic_write(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _document(cfg: dict, command: str, payload: dict) -> str:
    doc = {"command": command, "seed": cfg["seed"], "config": cfg, **payload}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- commands

def cmd_graph_gen(cfg, out: Path, args) -> list[Path]:
    graph = build_graph(cfg)
    buf = io.StringIO()
    dump_edge_list(graph, buf)
    path = out / "graph.edges"
    atomic_write(path, buf.getvalue())
    return [path]


def cmd_simulate(cfg, out: Path, args) -> list[Path]:
    graph = build_graph(cfg)
    truth = SpreadParams(*_require_truth(cfg))
    baseline = BaselineModel(np.tile(cfg["baseline"], (graph.node_count, 1)))
    g = rngmod.substream(cfg["seed"], rngmod.SYNTH, 0)
    z = simulate_hidden_cascade(graph, SeedSchedule.staggered(cfg["seeds"]), truth, baseline, rng=g)
    path = out / "symptoms.csv"
    atomic_write(path, _csv_text(("node", "symptom"), [(v, int(s)) for v, s in enumerate(z)]))
    return [path]


def cmd_infer(cfg, out: Path, args) -> list[Path]:
    graph = build_graph(cfg)
    problem = build_problem(cfg, graph, _require_truth(cfg))
    summary = replicate(problem, cfg["repeats"], cfg["seed"], args.parallelism)
    path = out / "result.json"
    atomic_write(path, _document(cfg, "infer", {"summary": summary.to_dict()}))
    return [path]


def cmd_grid(cfg, out: Path, args) -> list[Path]:
    graph = build_graph(cfg)
    rows = []
    for p, q in cfg["grid"]["points"]:
        started = time.perf_counter()
        summary = replicate(build_problem(cfg, graph, (p, q)), cfg["repeats"], cfg["seed"],
                            args.parallelism)
        wall = time.perf_counter() - started
        rows.append([_fmt(float(v)) for v in (p, q, summary.p_mean, summary.p_std,
                                              summary.q_mean, summary.q_std, summary.mse_mean,
                                              summary.ca_mean)]
                    + [str(summary.evaluations), f"{wall:.3f}"])
        log.info("grid point (%g, %g): p_hat=%.4f q_hat=%.4f", p, q, summary.p_mean, summary.q_mean)
    path = out / "grid.csv"
    atomic_write(path, _csv_text(GRID_HEADER, rows))
    return [path]


def cmd_report(cfg, out: Path, args) -> list[Path]:
    graph = build_graph(cfg)
    truth = SpreadParams(*_require_truth(cfg))
    r = cfg["report"]
    theta = SpreadParams(*(r["theta"] or cfg["truth"]))
    seeds = SeedSchedule.staggered(cfg["seeds"])
    baseline = BaselineModel(np.tile(cfg["baseline"], (graph.node_count, 1)))
    seed = cfg["seed"]
    obs = generate_feature_set(OBSERVED, truth, graph, seeds, baseline, r["samples"], cfg["n"],
                               "reduced", rngmod.derive_seed(seed, rngmod.TRUTH))
    sim = generate_feature_set(SIMULATED, theta, graph, seeds, baseline, r["samples"], cfg["n"],
                               "reduced", rngmod.derive_seed(seed, rngmod.REPORT))
    rows = symptom_distribution_report(obs, sim, hop_distances(graph, seeds),
                                       graph.out_degrees(), r["bins"])
    summary = [(row["distance"], row["degree_bucket"], row["entities"],
                _fmt(row["observed_mean"]), _fmt(row["simulated_mean"]), _fmt(row["ks"]))
               for row in rows]
    hist = []
    for row in rows:
        edges = row["bin_edges"]
        for source in ("observed", "simulated"):
            for k, mass in enumerate(row[f"{source}_hist"]):
                hist.append((row["distance"], row["degree_bucket"], source, _fmt(edges[k]),
                             _fmt(edges[k + 1]), _fmt(float(mass))))
    p1, p2 = out / "report_summary.csv", out / "report_hist.csv"
    atomic_write(p1, _csv_text(("distance", "degree_bucket", "entities", "observed_mean",
                                "simulated_mean", "ks"), summary))
    atomic_write(p2, _csv_text(("distance", "degree_bucket", "source", "bin_lo", "bin_hi",
                                "mass"), hist))
    return [p1, p2]


def cmd_empirical_synth(cfg, out: Path, args) -> list[Path]:
    e = cfg["empirical"]
    graph = build_graph(cfg)
    seed = cfg["seed"]
    calendar = emp.synth_calendar(e["announcements"], gap=e["gap"], seed=seed)
    baselines = emp.synth_baselines(graph.node_count, seed=seed)
    st = emp.synth_trades(graph, SeedSchedule.staggered(cfg["seeds"]),
                          SpreadParams(*e["theta_announcement"]),
                          SpreadParams(*e["theta_non_announcement"]), calendar, baselines, seed)
    files = {}
    buf = io.StringIO()
    emp.write_trades(st.trades, buf)
    files["trades.csv"] = buf.getvalue()
    buf = io.StringIO()
    emp.write_calendar(calendar, buf)
    files["calendar.csv"] = buf.getvalue()
    files["baselines.csv"] = _csv_text(
        ("investor_id", "b0", "b1", "b2"),
        [(u, *(_fmt(float(x)) for x in row)) for u, row in enumerate(baselines.probs)])
    paths = []
    for name, text in files.items():
        atomic_write(out / name, text)
        paths.append(out / name)
    return paths


def read_baselines(path: str, investors: int) -> BaselineModel:
    with open(path) as fh:
        r = csv.reader(fh)
        header = next(r, [])
        if [h.strip() for h in header] != ["investor_id", "b0", "b1", "b2"]:
            raise ValueError(f"baselines header must be investor_id,b0,b1,b2; got {header}")
        probs = np.zeros((investors, 3))
        seen = set()
        for row in r:
            if row:
                u = int(row[0])
                probs[u] = [float(x) for x in row[1:4]]
                seen.add(u)
    if seen != set(range(investors)):
        raise ValueError(f"baselines file must cover investors 0..{investors - 1}")
    return BaselineModel(probs)


def cmd_empirical_infer(cfg, out: Path, args) -> list[Path]:
    e = cfg["empirical"]
    problems = [f"empirical.{k}: required for empirical-infer" for k in ("trades", "calendar")
                if not e.get(k)]
    if problems:
        raise ConfigError(problems)
    graph = build_graph(cfg)
    with open(e["trades"]) as fh:
        trades = emp.read_trades(fh)
    with open(e["calendar"]) as fh:
        calendar = emp.read_calendar(fh)
    baselines = read_baselines(e["baselines"], graph.node_count) if e.get("baselines") else None
    pw, c = cfg["powell"], cfg["classifier"]
    config = emp.EmpiricalConfig(
        bootstrap=e["bootstrap"], width=e["width"], kind=cfg["stat"],
        classifier=ClassifierSpec.make(c["kind"], c.get("params") or {}),
        powell=PowellConfig(pw["ftol"], pw["xtol"], pw["max_iterations"]),
        restart_cap=pw["restart_cap"], tune=c["tune"], seed=cfg["seed"])
    res = emp.infer_company(trades, calendar, graph, SeedSchedule.staggered(cfg["seeds"]),
                            config, baselines)
    row = (e["company"], _fmt(res.announcement.theta_hat.p), _fmt(res.announcement.theta_hat.q),
           _fmt(res.announcement.final_global_ca), _fmt(res.non_announcement.theta_hat.p),
           _fmt(res.non_announcement.theta_hat.q), _fmt(res.non_announcement.final_global_ca),
           _fmt(res.p_ratio), _fmt(res.q_ratio))
    p1, p2 = out / "empirical.csv", out / "empirical.json"
    atomic_write(p1, _csv_text(("company", "p_hat_a", "q_hat_a", "ca_a", "p_hat_n", "q_hat_n",
                                "ca_n", "p_ratio", "q_ratio"), [row]))
    atomic_write(p2, _document(cfg, "empirical-infer", {"result": res.to_dict()}))
    return [p1, p2]


COMMANDS = {
    "graph-gen": cmd_graph_gen,
    "simulate": cmd_simulate,
    "infer": cmd_infer,
    "grid": cmd_grid,
    "empirical-synth": cmd_empirical_synth,
    "empirical-infer": cmd_empirical_infer,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcinfer",
                                     description="Hidden-cascade parameter inference.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON or YAML config file")
        sp.add_argument("--seed", type=int, help="base seed (nonnegative)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--parallelism", type=int, default=os.cpu_count() or 1,
                        help="worker processes for repeated runs")
        sp.add_argument("--stat", choices=STAT_KINDS)
        sp.add_argument("--classifier", choices=KINDS)
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def _error(kind: str, problems: list[str]) -> int:
    sys.stderr.write(json.dumps({"error": kind, "problems": problems}, sort_keys=True) + "\n")
    return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.parallelism < 1:
        return _error("config", [f"parallelism: must be >= 1, got {args.parallelism}"])
    try:
        cfg = load_config(args.config, args)
        paths = COMMANDS[args.command](cfg, Path(args.out), args)
    except ConfigError as exc:
        return _error("config", exc.problems)
    except (GraphError, emp.CalendarError, emp.SplitError, ValueError, OSError) as exc:
        return _error(type(exc).__name__, [str(exc)])
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
