"""Diffusions conditioned to drift to +infinity: scale and speed objects,
the conditioned drift, Doob h-transforms and Monte Carlo checks."""

from .coeffexpr import compile_expr, evaluate, parse, pretty_print
from .conditioning import (
    ConditionedDiffusion,
    HTransformChars,
    condition_to_infinity,
    conditioned_drift,
    h_generator,
    h_transform_chars,
    q_weight,
)
from .diffusion import PRESETS, DiffusionSpec, bm_drift, gbm, load_model, logistic, parse_model
from .errors import (
    AssumptionViolated,
    ConfigInvalid,
    Divergent,
    DivisionByZero,
    DoobCondError,
    EmptySample,
    ExprSyntaxError,
    NoAcceptedPaths,
    NonConvergence,
    NonFinite,
    OutOfDomain,
    UnknownIdentifier,
    UnsupportedPreset,
)
from .montecarlo import (
    EmpiricalDistribution,
    KillCondSetup,
    PathEnsemble,
    SimConfig,
    exact_sampler,
    explosion_profile,
    hitting_probability_mc,
    ks_statistic,
    simulate_killed_conditioned,
    simulate_model,
    simulate_paths,
    weighted_expectation,
)
from .numerics import QuadResult, adaptive_quadrature, finite_difference_derivs, improper_lower_integral
from .scale import (
    AssumptionReport,
    ScaleSpeed,
    apply_generator,
    build_scale_speed,
    check_assumptions,
    driftless_zero_hit_test,
    hitting_probability,
)

__all__ = [
    "adaptive_quadrature",
    "apply_generator",
    "AssumptionReport",
    "AssumptionViolated",
    "bm_drift",
    "build_scale_speed",
    "check_assumptions",
    "compile_expr",
    "condition_to_infinity",
    "conditioned_drift",
    "ConditionedDiffusion",
    "ConfigInvalid",
    "DiffusionSpec",
    "Divergent",
    "DivisionByZero",
    "DoobCondError",
    "driftless_zero_hit_test",
    "EmpiricalDistribution",
    "EmptySample",
    "evaluate",
    "exact_sampler",
    "explosion_profile",
    "ExprSyntaxError",
    "finite_difference_derivs",
    "gbm",
    "h_generator",
    "h_transform_chars",
    "hitting_probability",
    "hitting_probability_mc",
    "HTransformChars",
    "improper_lower_integral",
    "KillCondSetup",
    "ks_statistic",
    "load_model",
    "logistic",
    "NoAcceptedPaths",
    "NonConvergence",
    "NonFinite",
    "OutOfDomain",
    "parse",
    "parse_model",
    "PathEnsemble",
    "PRESETS",
    "pretty_print",
    "q_weight",
    "QuadResult",
    "ScaleSpeed",
    "SimConfig",
    "simulate_killed_conditioned",
    "simulate_model",
    "simulate_paths",
    "UnknownIdentifier",
    "UnsupportedPreset",
    "weighted_expectation",
]

__version__ = "0.1.0"
