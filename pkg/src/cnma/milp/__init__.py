"""Mixed-integer linear programs: model, simplex, branch-and-bound, LP files."""

from .branch_and_bound import FEASIBLE, TIMEOUT, MilpSolution, solve_milp
from .lpformat import escape_name, export_lp_format, read_lp_format, unescape_name
from .model import Milp, MilpArrays, MilpVar, random_milp
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LpSolution, solve_lp

__all__ = [
    "FEASIBLE", "INFEASIBLE", "OPTIMAL", "TIMEOUT", "UNBOUNDED",
    "LpSolution", "Milp", "MilpArrays", "MilpSolution", "MilpVar",
    "escape_name", "export_lp_format", "random_milp", "read_lp_format", "solve_lp",
    "solve_milp", "unescape_name",
]
