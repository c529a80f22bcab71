"""Deterministic rotor walks on Z^d.

Escape-rate experiments, finite-ball approximations, odometers with their
discrete calculus, and lattice Green functions, all driven by exact rotor
bookkeeping with optional jitted kernels for large runs.
"""

from .analysis import (
    AnalysisError,
    EdgeFlux,
    Odometer,
    ShellProfile,
    abelian_schedule_check,
    check_flux_identity,
    check_inn,
    compute_odometer,
    count_columns,
    divergence,
    gradient,
    laplacian,
    odometer_green_residual,
    run_scheduled,
)
from .engine import (
    EngineError,
    EscapeStats,
    StabilizationResult,
    estimate_I_stabilized,
    run_escape_experiment,
    run_finite_ball,
)
from .green import (
    AlphaEstimate,
    GreenError,
    GreenTable,
    alpha_mc,
    fit_a_d,
    green_asymptotic,
    green_dense_reference,
    green_exact,
    green_mc,
    load_cached_alpha,
)
from .lattice import (
    AlignedRule,
    Direction,
    ExplicitRule,
    IidRandomRule,
    LatticeError,
    Mechanism,
    Point,
    RotorState,
    SplitRule,
    ball_points,
    boundary_points,
    default_odometer_radius,
    direction_set,
    in_ball,
    is_boundary,
    next_exit,
    rule_from_spec,
    up_direction,
    up_rule,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedRule",
    "AlphaEstimate",
    "AnalysisError",
    "Direction",
    "EdgeFlux",
    "EngineError",
    "EscapeStats",
    "ExplicitRule",
    "GreenError",
    "GreenTable",
    "IidRandomRule",
    "LatticeError",
    "Mechanism",
    "Odometer",
    "Point",
    "RotorState",
    "ShellProfile",
    "SplitRule",
    "StabilizationResult",
    "abelian_schedule_check",
    "alpha_mc",
    "ball_points",
    "boundary_points",
    "check_flux_identity",
    "check_inn",
    "compute_odometer",
    "count_columns",
    "default_odometer_radius",
    "direction_set",
    "divergence",
    "estimate_I_stabilized",
    "fit_a_d",
    "gradient",
    "green_asymptotic",
    "green_dense_reference",
    "green_exact",
    "green_mc",
    "in_ball",
    "is_boundary",
    "laplacian",
    "load_cached_alpha",
    "next_exit",
    "odometer_green_residual",
    "run_escape_experiment",
    "run_finite_ball",
    "run_scheduled",
    "rule_from_spec",
    "up_direction",
    "up_rule",
    "__version__",
]
