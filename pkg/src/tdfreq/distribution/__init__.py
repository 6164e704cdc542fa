from .feeder import (
    Branch,
    DerSite,
    FeederConvergenceError,
    FeederError,
    FeederNetwork,
    FeederSolution,
    Load,
    Violation,
    aggregate_positive_sequence,
    boundary_power_mva,
    check_limits,
    solve_feeder,
)

__all__ = [
    "Branch",
    "DerSite",
    "FeederConvergenceError",
    "FeederError",
    "FeederNetwork",
    "FeederSolution",
    "Load",
    "Violation",
    "aggregate_positive_sequence",
    "boundary_power_mva",
    "check_limits",
    "solve_feeder",
]
