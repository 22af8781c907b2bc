"""Command-line harness: ``cnma run CONFIG.toml`` and ``cnma compare TRACE...``.

Config schema (``schema_id = "cnma-run/1"``)::

    schema_id = "cnma-run/1"
    name = "rastrigin-parallel"     # optional; artifacts go to output_dir/name
    engine = "parallel_cnma"        # cnma | parallel_cnma | random_search
    seed = 0
    output_dir = "runs"

    [problem]
    benchmark = "rastrigin"
    params = { n = 1 }              # benchmark-specific
    objective = "y"                 # optional override, linear in x/y names
    sense = "maximize"              # optional override
    constraints = ["y >= 35"]       # extra linear constraints

    [engine_config]                 # EngineConfig / ParallelConfig fields
    max_iterations = 15
    workers = 10
    architectures = [[35, 10], [10]]
    eval_budget = 1000              # random_search only

    [training]                      # TrainConfig fields
    epochs = 2000

    [solver]
    milp_time_limit = 30.0
    gap_tol = 1e-6
    big_m_mode = "interval"
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from collections.abc import Sequence
from dataclasses import dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .benchmarks import (
    BENCHMARK_NAMES,
    EXTERNAL_BENCHMARKS,
    ExternalSimulatorRequired,
    get_benchmark,
    random_search,
)
from .engine import EngineConfig, RunResult, RunTrace, cnma_optimize
from .linparse import ParseError, parse_constraint, parse_linear
from .parallel import ParallelConfig, parallel_cnma
from .problem import MAXIMIZE, MINIMIZE, Problem, check_constraints
from .surrogate import Architecture, TrainConfig

SCHEMA_ID = "cnma-run/1"
ENGINES = ("cnma", "parallel_cnma", "random_search")
SERIES_POINTS = 200

log = logging.getLogger("cnma.cli")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- config

_TOP_KEYS = {"schema_id", "name", "engine", "seed", "output_dir", "problem", "engine_config", "training", "solver"}
_PROBLEM_KEYS = {"benchmark", "params", "objective", "sense", "constraints"}
_SOLVER_KEYS = {"milp_time_limit", "gap_tol", "big_m_mode"}
_ENGINE_FIELDS = {f.name for f in fields(ParallelConfig)} - {"train_config", "seed"} - _SOLVER_KEYS
_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)} - {"weight_init_seed"}


@dataclass
class RunConfig:
    engine: str
    benchmark: str
    benchmark_params: dict
    seed: int
    output_dir: Path
    name: str | None
    engine_config: EngineConfig
    eval_budget: int | None
    objective: str | None
    sense: str | None
    constraints: tuple[str, ...]
    document: dict
    """The resolved config, echoed into result.json."""

    @property
    def run_dir(self) -> Path:
        return self.output_dir / self.name if self.name else self.output_dir


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _table(doc: dict, key: str) -> dict:
    """A config section; null entries (from a JSON echo) count as absent."""
    value = doc.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return {k: v for k, v in value.items() if v is not None}


def build_problem(benchmark: str, params: dict, objective: str | None = None, sense: str | None = None,
                  constraints: Sequence[str] = ()) -> Problem:
    """Instantiate a benchmark and apply the config's composition options."""
    if benchmark in EXTERNAL_BENCHMARKS:
        raise ConfigError(f"benchmark {benchmark!r}: external simulator required")
    try:
        spec = get_benchmark(benchmark, **params)
    except KeyError:
        raise ConfigError(f"unknown benchmark {benchmark!r} (known: {', '.join(BENCHMARK_NAMES)})") from None
    try:
        extra = [parse_constraint(c, f"config_{i}") for i, c in enumerate(constraints)]
        problem = spec.problem(extra)
        if objective is not None:
            problem = replace(problem, objective=parse_linear(objective))
    except ParseError as exc:
        raise ConfigError(f"[problem]: {exc}") from None
    if sense is not None:
        if sense not in (MAXIMIZE, MINIMIZE):
            raise ConfigError(f"[problem] sense must be {MAXIMIZE!r} or {MINIMIZE!r}")
        problem = replace(problem, sense=sense)
    return problem


def parse_config(doc: dict, seed: int | None = None, output_dir: str | None = None,
                 engine: str | None = None) -> RunConfig:
    """Validate a parsed TOML document; CLI overrides win over file values."""
    doc = {k: v for k, v in doc.items() if v is not None}
    if isinstance(doc.get("engine"), dict):
        raise ConfigError("'engine' must be an engine name; engine settings go under [engine_config]")
    _check_keys(doc, _TOP_KEYS, "config")
    schema = doc.get("schema_id", SCHEMA_ID)
    if schema != SCHEMA_ID:
        raise ConfigError(f"unsupported schema_id {schema!r} (expected {SCHEMA_ID!r})")

    engine = engine or doc.get("engine", "cnma")
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r} (expected one of {', '.join(ENGINES)})")
    seed = int(doc.get("seed", 0) if seed is None else seed)

    prob = _table(doc, "problem")
    _check_keys(prob, _PROBLEM_KEYS, "[problem]")
    if "benchmark" not in prob:
        raise ConfigError("[problem] benchmark is required")
    params = prob.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("[problem] params must be a table")
    constraints = prob.get("constraints", [])
    if isinstance(constraints, str):
        constraints = [constraints]
    # fail at parse time, before any artifacts are written
    try:
        build_problem(prob["benchmark"], params, prob.get("objective"), prob.get("sense"), constraints)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[problem] params: {exc}") from None

    eng = dict(_table(doc, "engine_config"))
    train = _table(doc, "training")
    solver = _table(doc, "solver")
    _check_keys(eng, _ENGINE_FIELDS | {"eval_budget"}, "[engine_config]")
    _check_keys(train, _TRAIN_FIELDS, "[training]")
    _check_keys(solver, _SOLVER_KEYS, "[solver]")
    eval_budget = eng.pop("eval_budget", None)

    try:
        train_config = TrainConfig(**train)
        if "architecture" in eng:
            eng["architecture"] = Architecture(tuple(eng["architecture"]))
        if "architectures" in eng:
            eng["architectures"] = tuple(Architecture(tuple(a)) for a in eng["architectures"])
        if "initial_points" in eng:
            eng["initial_points"] = tuple(tuple(p) for p in eng["initial_points"])
        common = dict(eng, **solver, train_config=train_config, seed=seed)
        if engine == "parallel_cnma":
            engine_config: EngineConfig = ParallelConfig(**common)
        else:
            parallel_only = sorted(set(common) & ({f.name for f in fields(ParallelConfig)}
                                                  - {f.name for f in fields(EngineConfig)}))
            if parallel_only:
                log.warning("ignoring parallel-only settings %s for engine %s", parallel_only, engine)
            engine_config = EngineConfig(**{k: v for k, v in common.items() if k not in parallel_only})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid engine/training/solver settings: {exc}") from None

    if engine == "random_search":
        eval_budget = eval_budget if eval_budget is not None else engine_config.max_evaluations
        if eval_budget is None or int(eval_budget) < 1:
            raise ConfigError("random_search needs [engine_config] eval_budget >= 1")
        eval_budget = int(eval_budget)

    out = Path(output_dir if output_dir is not None else doc.get("output_dir", "runs"))
    name = doc.get("name")
    resolved = {
        "schema_id": SCHEMA_ID,
        "name": name,
        "engine": engine,
        "seed": seed,
        "problem": {"benchmark": prob["benchmark"], "params": params, "objective": prob.get("objective"),
                    "sense": prob.get("sense"), "constraints": list(constraints)},
        "engine_config": _jsonable({k: v for k, v in engine_config.to_dict().items()
                                    if k not in ("train_config", "seed") and k not in _SOLVER_KEYS}),
        "training": _jsonable({k: v for k, v in engine_config.to_dict()["train_config"].items()
                               if k != "weight_init_seed"}),
        "solver": {k: getattr(engine_config, k) for k in sorted(_SOLVER_KEYS)},
    }
    if eval_budget is not None:
        resolved["engine_config"]["eval_budget"] = eval_budget
    return RunConfig(engine, prob["benchmark"], params, seed, out, name, engine_config, eval_budget,
                     prob.get("objective"), prob.get("sense"), tuple(constraints), resolved)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def load_config(path: str | os.PathLike, **overrides) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc, **overrides)


# --------------------------------------------------------------------------- run

def execute(cfg: RunConfig) -> tuple[Problem, RunResult]:
    problem = build_problem(cfg.benchmark, cfg.benchmark_params, cfg.objective, cfg.sense, cfg.constraints)
    ec = cfg.engine_config
    if cfg.engine == "cnma":
        result = cnma_optimize(problem, ec)
    elif cfg.engine == "parallel_cnma":
        result = parallel_cnma(problem, ec)
    else:
        result = random_search(problem, cfg.eval_budget, seed=cfg.seed, time_budget=ec.time_budget,
                               eval_timeout=ec.eval_timeout)
    return problem, result


def result_document(cfg: RunConfig, problem: Problem, result: RunResult) -> dict:
    doc = result.to_dict()
    if result.best is not None:
        assignment = problem.assignment(result.best.x, result.best.y)
        doc["best"]["x_named"] = dict(zip(problem.x_names, result.best.x))
        doc["best"]["y_named"] = dict(zip(problem.y_names, result.best.y))
        doc["feasible"] = bool(check_constraints(problem, assignment))
    doc.update(schema_id=SCHEMA_ID, engine=cfg.engine, seed=cfg.seed, benchmark=cfg.benchmark,
               config=cfg.document)
    return doc


def run(cfg: RunConfig) -> Path:
    """Execute one configured run and write its artifacts; returns the run directory."""
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(run_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("cnma")
    old_level = root.level
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        log.info("run %s: engine %s, benchmark %s, seed %d", cfg.name or run_dir, cfg.engine,
                 cfg.benchmark, cfg.seed)
        problem, result = execute(cfg)
        result.trace.to_csv(run_dir / "trace.csv", with_worker_id=True)
        doc = result_document(cfg, problem, result)
        (run_dir / "result.json").write_text(json.dumps(doc, indent=2))
        log.info("finished: %s after %d evaluations, best %s", result.termination, result.evaluations,
                 result.best_objective)
    finally:
        root.removeHandler(handler)
        root.setLevel(old_level)
        handler.close()
    return run_dir


# --------------------------------------------------------------------------- compare

@dataclass
class TraceSummary:
    label: str
    best_objective: float | None
    evaluations_to_best: int | None
    seconds_to_best: float | None
    total_evaluations: int
    evaluations_to_target: int | None = None
    seconds_to_target: float | None = None


def summarize_trace(label: str, trace: RunTrace, sense: str = MAXIMIZE,
                    target: float | None = None) -> TraceSummary:
    rows = [r for r in trace.rows if r.event != "accepted"] or trace.rows
    final = next((r.best_objective for r in reversed(rows) if r.best_objective is not None), None)
    first_best = next((r for r in rows if r.best_objective is not None and r.best_objective == final), None)
    summary = TraceSummary(label, final,
                           None if first_best is None else first_best.cumulative_evaluations,
                           None if first_best is None else first_best.wall_seconds,
                           rows[-1].cumulative_evaluations if rows else 0)
    if target is not None:
        hit = next((r for r in rows if r.best_objective is not None and
                    (r.best_objective >= target if sense == MAXIMIZE else r.best_objective <= target)), None)
        if hit is not None:
            summary.evaluations_to_target = hit.cumulative_evaluations
            summary.seconds_to_target = hit.wall_seconds
    return summary


def rank(summaries: list[TraceSummary], sense: str = MAXIMIZE) -> list[TraceSummary]:
    """Best objective first; ties go to fewer evaluations to reach it."""
    def key(s: TraceSummary):
        if s.best_objective is None:
            return (1, 0.0, 0)
        value = -s.best_objective if sense == MAXIMIZE else s.best_objective
        return (0, value, s.evaluations_to_best or 0)
    return sorted(summaries, key=key)


def downsample(trace: RunTrace, points: int = SERIES_POINTS) -> list[tuple[int, float, float | None]]:
    """Improvement rows plus the last row, thinned evenly to at most ``points``."""
    series = trace.best_series()
    if not series:
        return []
    keep = [0] + [i for i in range(1, len(series)) if series[i][2] != series[i - 1][2]] + [len(series) - 1]
    keep = sorted(set(keep))
    if len(keep) > points:
        idx = {keep[round(k * (len(keep) - 1) / (points - 1))] for k in range(points)}
        keep = sorted(idx)
    return [series[i] for i in keep]


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_table(summaries: list[TraceSummary], target: float | None = None) -> str:
    head = ["rank", "trace", "best", "evals_to_best", "seconds_to_best", "evaluations"]
    if target is not None:
        head += [f"evals_to_{target:g}", f"seconds_to_{target:g}"]
    rows = []
    for i, s in enumerate(summaries, 1):
        row = [str(i), s.label, _fmt(s.best_objective), _fmt(s.evaluations_to_best),
               _fmt(s.seconds_to_best), str(s.total_evaluations)]
        if target is not None:
            row += [_fmt(s.evaluations_to_target), _fmt(s.seconds_to_target)]
        rows.append(row)
    widths = [max(len(r[k]) for r in [head] + rows) for k in range(len(head))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + rows]
    return "\n".join(lines) + "\n"


def _trace_sense(path: Path) -> str | None:
    result = path.parent / "result.json"
    try:
        return json.loads(result.read_text()).get("sense")
    except (OSError, ValueError):
        return None


def compare(paths: Sequence[str | os.PathLike], output_dir: str | os.PathLike | None = None,
            sense: str | None = None, target: float | None = None,
            labels: Sequence[str] | None = None) -> tuple[list[TraceSummary], str]:
    """Summarize traces, write comparison.csv/.txt and per-trace series; returns (ranked, table)."""
    if not paths:
        raise ConfigError("compare needs at least one trace")
    paths = [Path(p) for p in paths]
    if labels is None:
        labels = [p.parent.name if p.name == "trace.csv" and p.parent.name else p.stem for p in paths]
        if len(set(labels)) < len(labels):
            labels = [f"{i}_{lab}" for i, lab in enumerate(labels)]
    if sense is None:
        sense = next((s for s in map(_trace_sense, paths) if s), MAXIMIZE)
    traces = []
    for p in paths:
        try:
            trace = RunTrace.from_csv(p.read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"unreadable trace {p}: {exc}") from None
        if not trace.rows:
            raise ConfigError(f"unreadable trace {p}: no rows")
        traces.append(trace)
    ranked = rank([summarize_trace(lab, t, sense, target) for lab, t in zip(labels, traces)], sense)
    table = render_table(ranked, target)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "trace", "best_objective", "evaluations_to_best", "seconds_to_best",
                    "total_evaluations", "evaluations_to_target", "seconds_to_target"])
        for i, s in enumerate(ranked, 1):
            w.writerow([i, s.label, _fmt_csv(s.best_objective), _fmt_csv(s.evaluations_to_best),
                        _fmt_csv(s.seconds_to_best), s.total_evaluations,
                        _fmt_csv(s.evaluations_to_target), _fmt_csv(s.seconds_to_target)])
        (out / "comparison.csv").write_text(buf.getvalue())
        (out / "comparison.txt").write_text(table)
        for lab, trace in zip(labels, traces):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["cumulative_evaluations", "wall_seconds", "best_objective"])
            for ev, sec, best in downsample(trace):
                w.writerow([ev, f"{sec:.6f}", _fmt_csv(best)])
            (out / f"series_{_safe(lab)}.csv").write_text(buf.getvalue())
    return ranked, table


def _fmt_csv(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label)


# --------------------------------------------------------------------------- entry point

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnma", description="Surrogate-MILP blackbox optimization runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute one run from a TOML config")
    r.add_argument("config", help="path to the run config (TOML)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--output-dir", help="override the config output_dir")
    r.add_argument("--engine", choices=ENGINES, help="override the config engine")
    r.add_argument("-v", "--verbose", action="store_true", help="also log progress to stderr")
    c = sub.add_parser("compare", help="rank traces and write comparison.csv plus plot-ready series")
    c.add_argument("traces", nargs="+", help="trace.csv files")
    c.add_argument("--output-dir", help="where to write comparison.csv, comparison.txt and series_*.csv")
    c.add_argument("--sense", choices=(MAXIMIZE, MINIMIZE),
                   help="objective sense (default: read from a neighbouring result.json, else maximize)")
    c.add_argument("--target", type=float, help="also report evaluations/seconds to reach this value")
    c.add_argument("--labels", nargs="+", help="display names, one per trace")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.verbose:
                logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
            cfg = load_config(args.config, seed=args.seed, output_dir=args.output_dir, engine=args.engine)
            run_dir = run(cfg)
            result = json.loads((run_dir / "result.json").read_text())
            best = result["best"]
            print(f"{result['termination']}: best {best['objective'] if best else 'none'} "
                  f"after {result['evaluations']} evaluations -> {run_dir}")
        else:
            if args.labels is not None and len(args.labels) != len(args.traces):
                raise ConfigError("--labels needs one label per trace")
            _, table = compare(args.traces, args.output_dir, args.sense, args.target, args.labels)
            sys.stdout.write(table)
    except (ConfigError, ExternalSimulatorRequired) as exc:
        print(f"cnma: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
