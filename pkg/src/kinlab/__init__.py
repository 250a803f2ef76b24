"""Numerical laboratory for the stationary linearized Boltzmann boundary-value problem on convex domains."""
from .collision import (CollisionModel, VelocityQuadrature, apply_K, caflisch_integral, inverse_square_moment,
                        kernel, kernel_moment, maxwellian_ratios, moment_sweep, nu, schur_test)
from .config import RunConfig
from .errors import (AliasWarning, BudgetExceeded, CoincidentVelocities, ConfigError, CurvatureDegenerate,
                     DegenerateGradient, KinlabError, MembershipViolation, NoConvergence, QuadratureFailure,
                     RayDegenerate, ShellFloorDominant, TruncationWarning, UnknownCheck)
from .geometry import (Ball, ConvexDomain, Ellipsoid, Superellipsoid, chord_frac_integral, distance_to_boundary,
                       domain_from_spec, exit_record, principal_curvatures, rolling_radii, surface_singular_integral)
from .phase import PhaseFunction
from .seminorm import (SeminormEstimate, equivalence_ratio, fourier_fractional_norm, multiplier_decay_check,
                       regularity_sweep, slobodeckij_seminorm)
from .suite import CHECKS, Certificate, run_check, run_suite
from .transport import (BoundaryData, apply_J, apply_S_omega, apply_S_wholespace, change_of_variable_check,
                        picard_term, sk_square_bound_check, truncated_series_solve, zero_extension)

__version__ = "0.1.0"
