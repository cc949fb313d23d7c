"""
Expressivity checks for the fixed, LA and MoA function classes.

Witness targets with closed-form gradients, width-one exact constructions,
grid estimates of the W^{1,inf} distance, derivative-jump profiles and
best-of-restarts fits, gathered into one witness report.
"""

from .targets import (
    ProfileTag,
    ProfileTarget,
    TargetEvaluation,
    WitnessTag,
    WitnessTarget,
    eval_target,
    theorem_targets,
)
from .theory import (
    TheoryFamily,
    TheoryNetwork,
    exact_construct,
    fixed_as_la,
    fixed_pair_as_qd_la,
    la_as_moa,
    param_shapes,
)
from .sobolev import GridSpec, SobolevEstimate, ZeroFunction, sobolev_distance
from .jumps import (
    AdaptiveBound,
    JumpProfile,
    adaptive_ridge_bound,
    jump_profile,
    quadratic_fit_residual,
    ridge_segment,
    step_function_floor,
)
from .fitting import ClassFitter, FitBudget, FitResult, fit_class
from .report import WitnessReport, WitnessRow, WitnessSuite, parse_tamper, run_witness_suite

__all__ = [
    # Targets
    "ProfileTag",
    "ProfileTarget",
    "TargetEvaluation",
    "WitnessTag",
    "WitnessTarget",
    "eval_target",
    "theorem_targets",

    # Theory networks and constructions
    "TheoryFamily",
    "TheoryNetwork",
    "exact_construct",
    "fixed_as_la",
    "fixed_pair_as_qd_la",
    "la_as_moa",
    "param_shapes",

    # Distances and jumps
    "GridSpec",
    "SobolevEstimate",
    "ZeroFunction",
    "sobolev_distance",
    "AdaptiveBound",
    "JumpProfile",
    "adaptive_ridge_bound",
    "jump_profile",
    "quadratic_fit_residual",
    "ridge_segment",
    "step_function_floor",

    # Fitting and reports
    "ClassFitter",
    "FitBudget",
    "FitResult",
    "fit_class",
    "WitnessReport",
    "WitnessRow",
    "WitnessSuite",
    "parse_tamper",
    "run_witness_suite",
]
