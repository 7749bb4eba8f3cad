"""Drift-plus-penalty engines, brute-force oracles and a bound-checking harness."""

from .convex import (
    ConvexProgram,
    InnerSolverParams,
    compute_B_convex,
    inner_minimize,
    jensen_check,
    per_slot_objective,
    run_convex,
)
from .distributed import (
    GraphProblem,
    GraphTopology,
    NodeProgram,
    centralized_program,
    replicate_shared_constraint,
    run_distributed,
)
from .errors import DomainError, DPPError, NumericalError, OracleError, ProtocolError, ValidationError
from .functions import Affine, Box, ConvexFunction, DiagQuadratic, ProjectableSet
from .lp import LinearProgram, compute_B_lp, lp_per_slot_decision, run_lp
from .oracle import OracleResult, estimate_multiplier, optimum, static_optimum_grid, stochastic_optimum
from .queues import QueueState, lyapunov, queue_norm_bound, update_equality, update_inequality, violation_bound
from .stochastic import (
    RandomEventModel,
    SplitMix64,
    StochasticProblem,
    build_downlink_problem,
    compute_B,
    per_slot_decision,
    run,
)
from .trace import Trace, time_average

__all__ = [
    "Affine",
    "Box",
    "build_downlink_problem",
    "centralized_program",
    "compute_B",
    "compute_B_convex",
    "compute_B_lp",
    "ConvexFunction",
    "ConvexProgram",
    "DiagQuadratic",
    "DomainError",
    "DPPError",
    "estimate_multiplier",
    "GraphProblem",
    "GraphTopology",
    "inner_minimize",
    "InnerSolverParams",
    "jensen_check",
    "LinearProgram",
    "lp_per_slot_decision",
    "lyapunov",
    "NodeProgram",
    "NumericalError",
    "OracleError",
    "optimum",
    "OracleResult",
    "per_slot_decision",
    "per_slot_objective",
    "ProjectableSet",
    "ProtocolError",
    "queue_norm_bound",
    "QueueState",
    "RandomEventModel",
    "replicate_shared_constraint",
    "run",
    "run_convex",
    "run_distributed",
    "run_lp",
    "SplitMix64",
    "static_optimum_grid",
    "stochastic_optimum",
    "StochasticProblem",
    "time_average",
    "Trace",
    "update_equality",
    "update_inequality",
    "ValidationError",
    "violation_bound",
]

__version__ = "0.1.0"
