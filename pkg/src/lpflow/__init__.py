"""Support-function solver for the anisotropic expanding Gauss curvature
flow and the even L_p-Minkowski problem on S^1 and S^2."""

from .sphere_grid import Grid, build_grid, covariant_hessian, integrate
from .convex_body import (
    ConvexityError,
    CurvatureData,
    PolarField,
    RecenterError,
    SupportField,
    ball,
    ball_volume,
    centro_affine,
    curvature,
    duality_residual,
    ellipsoid,
    embed,
    lp_barycenter,
    normalize_to_unit_volume,
    polar,
    recenter,
    volume,
)
from .flow_engine import (
    FlowError,
    FlowState,
    StepController,
    blowup_horizon,
    normalized_rate,
    polar_speed,
    polar_step,
    rescale_solution,
    run_polar,
    run_unnormalized,
    speed,
    step_normalized,
    step_unnormalized,
)
from .diagnostics import DiagnosticsRow, Recorder, record, volume_variation_defect
from .minkowski_solver import SolveResult, self_similar_residual, solve, verify_solution
from .cli_io import RunConfig, export_mesh, make_initial, parse_phi, run

__version__ = "0.1.0"
