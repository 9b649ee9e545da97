"""Simulation and bifurcation analysis of planar Filippov systems with switching line y = 0."""

from .system import (
    DenominatorUnderflow,
    FilippovSystem,
    FoldKind,
    PolyField,
    SigmaClass,
    SigmaKind,
    TangencyClass,
    classify_sigma_point,
    classify_tangency,
    eval_field,
    normalized_sliding_field,
    sliding_field,
)
from .flow import (
    Arc,
    FieldTag,
    IntegratorOptions,
    Side,
    Termination,
    Trajectory,
    filippov_orbit,
    half_map_down_backward,
    half_map_down_forward,
    half_map_up,
    integrate_to_sigma,
)

__version__ = "0.1.0"
