"""Exact solvers for basis pursuit denoising and basis pursuit."""

from .data import (InstanceBundle, generate_instance, read_matrix_market, read_path, read_vector,
                   write_matrix_market, write_path)
from .errors import (BPDNError, DomainError, InfeasibleError, InternalConsistencyError,
                     InvalidArgumentError, NonConvergenceError, ParseError, PathStallError,
                     RankDeficientError)
from .greedy import FeasiblePair, greedy_feasible
from .homotopy import PathBreakpoint, SolutionPath, path_query, solution_path
from .linalg import DesignMatrix, as_design_matrix
from .nnls import FREE, NONNEG, ZERO, NnlsProblem, NnlsSolution, Tag, solve_nnls
from .results import PrimalDualPair, SolverReport
from .slow import SolverOptions, regularization_path, solve_bpdn
from .verify import KktReport, brute_force_bpdn, fista_baseline, kkt_check

__version__ = "0.1.0"

__all__ = [
    "BPDNError", "DesignMatrix", "DomainError", "FREE", "FeasiblePair", "InfeasibleError",
    "InstanceBundle", "InternalConsistencyError", "InvalidArgumentError", "KktReport", "NONNEG",
    "NnlsProblem", "NnlsSolution", "NonConvergenceError", "ParseError", "PathBreakpoint",
    "PathStallError", "PrimalDualPair", "RankDeficientError", "SolutionPath", "SolverOptions",
    "SolverReport", "Tag", "ZERO", "as_design_matrix", "brute_force_bpdn", "fista_baseline",
    "generate_instance", "greedy_feasible", "kkt_check", "path_query", "read_matrix_market",
    "read_path", "read_vector", "regularization_path", "solution_path", "solve_bpdn",
    "solve_nnls", "write_matrix_market", "write_path",
]
