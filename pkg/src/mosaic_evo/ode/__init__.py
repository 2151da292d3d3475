from .analysis import (
    StabilityReport,
    boundary_flux,
    density_ratio_series,
    is_monotone,
    jacobian_numeric,
    linear_fixed_point,
    lyapunov_diag,
    nonlinear_field,
    nonlinear_fixed_point,
    nonlinear_jacobian,
    stability,
    straightness_residual,
)
from .integrator import Trajectory, integrate, read_trajectory_csv, write_trajectory_csv
