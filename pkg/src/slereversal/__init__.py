"""Chordal SLE_kappa(rho) sampling, conformal weights and time-reversal checks."""

from __future__ import annotations

from .params import (
    LEFT,
    RIGHT,
    ParamsError,
    SleParams,
    ThresholdViolation,
    TiltedParams,
    ValidityReport,
    merge_collided_points,
    params_from_config,
    reverse_params,
    validate_params,
)
from .loewner import (
    CurveTrace,
    LoewnerChain,
    SwallowedPointError,
    forward_map,
    forward_map_derivative,
    hull_swallow_time,
    trace_curve,
)

__version__ = "0.1.0"
