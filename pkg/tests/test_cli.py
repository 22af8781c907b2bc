import csv
import json
import math
from pathlib import Path

import pytest

from cnma.benchmarks import get_benchmark, rastrigin
from cnma.cli import (
    SCHEMA_ID,
    ConfigError,
    TraceSummary,
    build_problem,
    compare,
    downsample,
    load_config,
    main,
    parse_config,
    rank,
    summarize_trace,
)
from cnma.engine import RunTrace, TraceRow
from cnma.problem import MAXIMIZE, MINIMIZE, check_constraints

PARALLEL_RASTRIGIN = """
schema_id = "cnma-run/1"
name = "rastrigin-parallel"
engine = "parallel_cnma"
seed = 0

[problem]
benchmark = "rastrigin"

[engine_config]
workers = 10
max_iterations = 15
stop_objective = 40.0
executor = "serial"

[solver]
milp_time_limit = 3.0
"""

RANDOM_TOY = """
schema_id = "cnma-run/1"
name = "toy-random"
engine = "random_search"
seed = 4

[problem]
benchmark = "toy_constrained"

[engine_config]
eval_budget = 10000
"""

SHORT_CNMA = """
schema_id = "cnma-run/1"
name = "short"
engine = "cnma"
seed = 2

[problem]
benchmark = "rastrigin"
constraints = ["y >= 20"]

[engine_config]
max_iterations = 4
architecture = [10]

[training]
epochs = 300

[solver]
milp_time_limit = 2.0
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_trace(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def parallel_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("parallel")
    cfg = write(root, PARALLEL_RASTRIGIN)
    assert main(["run", str(cfg), "--output-dir", str(root / "out")]) == 0
    return root / "out" / "rastrigin-parallel"


@pytest.fixture(scope="module")
def random_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("random")
    cfg = write(root, RANDOM_TOY)
    assert main(["run", str(cfg), "--output-dir", str(root / "out")]) == 0
    return root / "out" / "toy-random"


class TestRun:
    def test_parallel_rastrigin_reaches_40(self, parallel_run):
        doc = json.loads((parallel_run / "result.json").read_text())
        assert doc["best"]["objective"] >= 40.0
        assert doc["schema_id"] == SCHEMA_ID and doc["engine"] == "parallel_cnma"
        assert doc["feasible"] is True
        assert (parallel_run / "run.log").read_text()

    def test_trace_columns_and_order(self, parallel_run):
        rows = read_trace(parallel_run / "trace.csv")
        assert list(rows[0]) == ["iteration", "wall_seconds", "cumulative_evaluations",
                                 "best_objective", "event", "worker_id"]
        counts = [int(r["cumulative_evaluations"]) for r in rows]
        assert counts == sorted(counts)
        seconds = [float(r["wall_seconds"]) for r in rows]
        assert seconds == sorted(seconds)

    def test_best_reevaluates_exactly(self, parallel_run):
        best = json.loads((parallel_run / "result.json").read_text())["best"]
        assert rastrigin(best["x"]) == best["y"][0]
        assert best["x_named"] == {"x": best["x"][0]}

    def test_random_search_feasibility_flag(self, random_run):
        doc = json.loads((random_run / "result.json").read_text())
        assert doc["evaluations"] == 10000
        problem = get_benchmark("toy_constrained").problem()
        best = doc["best"]
        y = get_benchmark("toy_constrained").blackbox(best["x"])
        assert tuple(y) == tuple(best["y"])
        assert doc["feasible"] == check_constraints(problem, problem.assignment(best["x"], y)).satisfied
        assert doc["feasible"] is True

    def test_config_echo_reproduces_run(self, tmp_path):
        first = main(["run", str(write(tmp_path, SHORT_CNMA)), "--output-dir", str(tmp_path / "a")])
        assert first == 0
        doc = json.loads((tmp_path / "a" / "short" / "result.json").read_text())
        echo = doc["config"]
        cfg = parse_config(echo, output_dir=str(tmp_path / "b"))
        assert cfg.document == echo
        from cnma.cli import run
        run(cfg)
        again = json.loads((tmp_path / "b" / "short" / "result.json").read_text())
        assert again["best"] == doc["best"]
        assert again["evaluations"] == doc["evaluations"]
        a = [(r["cumulative_evaluations"], r["best_objective"], r["event"])
             for r in read_trace(tmp_path / "a" / "short" / "trace.csv")]
        b = [(r["cumulative_evaluations"], r["best_objective"], r["event"])
             for r in read_trace(tmp_path / "b" / "short" / "trace.csv")]
        assert a == b

    def test_seed_and_engine_overrides(self, tmp_path):
        cfg = load_config(write(tmp_path, SHORT_CNMA), seed=9, engine="parallel_cnma", output_dir=str(tmp_path))
        assert cfg.seed == 9 and cfg.engine == "parallel_cnma"
        assert cfg.document["seed"] == 9
        assert cfg.engine_config.effective_base_seed == 9

    def test_random_search_needs_budget(self, tmp_path):
        with pytest.raises(ConfigError, match="eval_budget"):
            load_config(write(tmp_path, SHORT_CNMA), engine="random_search")


@pytest.mark.parametrize("path", sorted((Path(__file__).parent.parent / "configs").glob("*.toml")),
                         ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.document["schema_id"] == SCHEMA_ID
    assert parse_config(cfg.document).document == cfg.document


class TestConfigErrors:
    def test_unknown_benchmark_exits_1(self, tmp_path, capsys):
        text = PARALLEL_RASTRIGIN.replace('benchmark = "rastrigin"', 'benchmark = "rastrigen"')
        assert main(["run", str(write(tmp_path, text)), "--output-dir", str(tmp_path)]) == 1
        assert "rastrigen" in capsys.readouterr().err

    def test_external_benchmark(self, tmp_path, capsys):
        text = PARALLEL_RASTRIGIN.replace('benchmark = "rastrigin"', 'benchmark = "boat"')
        assert main(["run", str(write(tmp_path, text))]) == 1
        assert "external simulator required" in capsys.readouterr().err

    @pytest.mark.parametrize("doc, fragment", [
        ({"schema_id": "other/9", "engine": "cnma", "problem": {"benchmark": "rastrigin"}}, "schema_id"),
        ({"engine": "annealing", "problem": {"benchmark": "rastrigin"}}, "engine"),
        ({"engine": "cnma", "problem": {"benchmark": "rastrigin"}, "colour": 1}, "colour"),
        ({"engine": "cnma", "problem": {"benchmark": "rastrigin"}, "engine_config": {"max_iterations": 0}},
         "max_iterations"),
        ({"engine": "cnma", "problem": {"benchmark": "rastrigin", "constraints": ["y >= "]}}, "problem"),
        ({"engine": "cnma"}, "benchmark"),
        ({"engine": "cnma", "problem": {"benchmark": "failing_blackbox", "params": {"dead_band": [0.9, 0.1]}}},
         "dead_band"),
    ])
    def test_invalid_documents(self, doc, fragment):
        with pytest.raises(ConfigError, match=fragment):
            parse_config(doc)

    def test_malformed_toml_exits_1(self, tmp_path, capsys):
        assert main(["run", str(write(tmp_path, "engine = [unclosed"))]) == 1
        assert capsys.readouterr().err

    def test_composition(self):
        problem = build_problem("rastrigin", {}, objective="-1 * y", sense=MINIMIZE, constraints=["x <= 0"])
        assert problem.sense == MINIMIZE
        assert not check_constraints(problem, {"x": 1.0, "y": 0.0})


def _trace(values, sense=MAXIMIZE):
    rows = [TraceRow(0, 0.1 * i, i, v, "initial_sample") for i, v in enumerate(values, 1)]
    return RunTrace(rows)


class TestCompare:
    def test_single_trace_summary_is_final_incumbent(self, parallel_run, tmp_path):
        ranked, table = compare([parallel_run / "trace.csv"], tmp_path)
        doc = json.loads((parallel_run / "result.json").read_text())
        assert ranked[0].best_objective == doc["best"]["objective"]
        assert ranked[0].total_evaluations == doc["evaluations"]
        assert "rastrigin-parallel" in table
        assert (tmp_path / "comparison.csv").exists()
        assert (tmp_path / "series_rastrigin-parallel.csv").exists()

    def test_ranks_better_maximum_first(self):
        a = summarize_trace("A", _trace([1.0, 5.0]))
        b = summarize_trace("B", _trace([2.0, 3.0]))
        assert [s.label for s in rank([b, a], MAXIMIZE)] == ["A", "B"]
        assert [s.label for s in rank([a, b], MINIMIZE)] == ["B", "A"]

    def test_ties_go_to_fewer_evaluations(self):
        slow = TraceSummary("slow", 4.0, 30, 1.0, 30)
        fast = TraceSummary("fast", 4.0, 10, 2.0, 30)
        assert rank([slow, fast])[0].label == "fast"

    def test_no_incumbent_ranks_last(self):
        none = summarize_trace("none", _trace([None, None]))
        some = summarize_trace("some", _trace([None, -7.0]))
        assert [s.label for s in rank([none, some])] == ["some", "none"]

    def test_target_hits(self):
        s = summarize_trace("t", _trace([1.0, 3.0, 3.0, 6.0]), target=3.0)
        assert s.evaluations_to_target == 2
        assert s.evaluations_to_best == 4 and s.best_objective == 6.0
        s = summarize_trace("t", _trace([5.0, 3.0, 1.0]), MINIMIZE, target=2.0)
        assert s.evaluations_to_target == 3

    def test_downsample_keeps_improvements_and_end(self):
        values = [float(min(i // 100, 7)) for i in range(5000)]
        series = downsample(_trace(values))
        evals = [e for e, _, _ in series]
        assert evals[0] == 1 and evals[-1] == 5000
        assert [v for _, _, v in series] == sorted(v for _, _, v in series)
        assert {v for _, _, v in series} == set(range(8))
        assert len(downsample(_trace(list(map(float, range(1000)))))) == 200

    def test_unreadable_trace(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        assert main(["compare", str(bad)]) == 1
        assert str(bad) in capsys.readouterr().err
        assert main(["compare", str(tmp_path / "missing.csv")]) == 1

    def test_cnma_reaches_40_before_random_search(self, parallel_run, tmp_path):
        cfg = PARALLEL_RASTRIGIN.replace('engine = "parallel_cnma"', 'engine = "random_search"')
        cfg = cfg.replace("workers = 10", "eval_budget = 500").replace('name = "rastrigin-parallel"',
                                                                       'name = "rastrigin-random"')
        assert main(["run", str(write(tmp_path, cfg)), "--output-dir", str(tmp_path)]) == 0
        ranked, table = compare([parallel_run / "trace.csv", tmp_path / "rastrigin-random" / "trace.csv"],
                                tmp_path / "cmp", target=40.0)
        by = {s.label: s for s in ranked}
        cnma_hit = by["rastrigin-parallel"].evaluations_to_target
        random_hit = by["rastrigin-random"].evaluations_to_target
        assert cnma_hit is not None
        assert random_hit is None or cnma_hit < random_hit
        assert "evals_to_40" in table
        assert not math.isnan(by["rastrigin-parallel"].best_objective)
