"""Blackbox optimization by training ReLU surrogates and solving them as MILPs."""

from .benchmarks import BENCHMARK_NAMES, get_benchmark, random_search
from .encoding import compute_bounds, nn_to_milp, relu_to_milp
from .engine import (
    EngineConfig,
    RunResult,
    RunTrace,
    Solution,
    TraceRow,
    cnma_optimize,
    is_acceptable,
)
from .milp import Milp, MilpSolution, export_lp_format, solve_milp
from .parallel import ParallelConfig, SharedPool, parallel_cnma
from .problem import (
    BINARY,
    CONTINUOUS,
    INTEGER,
    MAXIMIZE,
    MINIMIZE,
    Blackbox,
    Constraint,
    EvalResult,
    LinearExpr,
    Problem,
    Sample,
    VariableSpec,
    abs_le,
    check_constraints,
    eq,
    ge,
    le,
    validate_problem,
)
from .sampling import SampleGenerator
from .surrogate import Architecture, ReluNetwork, TrainConfig, forward, train

__version__ = "0.1.0"

__all__ = [
    "BENCHMARK_NAMES", "BINARY", "CONTINUOUS", "INTEGER", "MAXIMIZE", "MINIMIZE",
    "Architecture", "Blackbox", "Constraint", "EngineConfig", "EvalResult", "LinearExpr", "Milp",
    "MilpSolution", "ParallelConfig", "Problem", "ReluNetwork", "RunResult", "RunTrace", "Sample",
    "SampleGenerator", "SharedPool", "Solution", "TraceRow", "TrainConfig", "VariableSpec",
    "abs_le", "check_constraints", "cnma_optimize", "compute_bounds", "eq", "export_lp_format",
    "forward", "ge", "get_benchmark", "is_acceptable", "le", "nn_to_milp", "parallel_cnma",
    "random_search", "relu_to_milp", "solve_milp", "train", "validate_problem",
]
