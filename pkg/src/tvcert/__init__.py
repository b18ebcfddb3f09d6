"""Discrete total-variation subdifferential certificates."""
from .calibrate import (
    CalibrationReport,
    Shape,
    calibrability_verdict,
    calibration_field,
    cheeger_ratio,
    curvature_condition,
    rasterize,
)
from .certify import (
    CERTIFIED,
    INCONCLUSIVE,
    REFUTED,
    BlockDCT,
    Certificate,
    Tolerances,
    certify,
    certify_interval_constrained,
    certify_rof,
    subgradient_oracle,
)
from .dual import MollifierSpec, mollify_boundary_aware, wq_div_norm
from .flow import FlowTrajectory, flow_step, piecewise_constant_approx, run_flow
from .grid import (
    GradientMeasure,
    GridDomain,
    ScalarField,
    VectorField,
    discrete_divergence,
    discrete_gradient,
    discrete_tv,
    gradient_measure,
)
from .solver import RofResult, SolverLimitError, solve_rof
from .trace import TraceResult, full_trace, gauss_green_residual, normal_trace

__version__ = "0.1.0"
