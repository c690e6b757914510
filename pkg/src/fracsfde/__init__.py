"""Fractional Brownian motion, Riemann-Liouville operators and weak EM convergence for
path-dependent SDEs driven by fBm with ``H in (1/2, 1)``."""

__version__ = "0.1.0"

from .grid import TimeGrid
from .fractional_ops import (SampledFunction, apply_KH, apply_KH_inverse, beta_fn, c0_constant,
                             frac_derivative, frac_integral, gamma_fn, kh_kernel, kh_kernel_deriv)
from .fbm_paths import (FbmPath, HolderEstimate, WienerPath, covariance, fbm_from_wiener,
                        fernique_check, holder_norm, sample_fbm_cholesky, sample_wiener, sup_norm)
from .sfde_models import (ModelSpec, Segment, build_degenerate_structure, check_stepsize_conditions,
                          get_model, hamiltonian_example, phi_constants, segment_at,
                          truncated_segment)
from .solvers import SolutionPath, moment_bound_check, solve_em_truncated, solve_reference
from .girsanov import (DriftDiscrepancy, WeightPath, compute_h, girsanov_weight,
                       kh_inverse_of_running_integral, weight_R_delta, weight_R_xi)
from .weak_convergence import ConvergenceConfig, WeakErrorReport, estimate_order, run_study, weak_error


__all__ = [
    "__version__",
    "TimeGrid",
    "SampledFunction",
    "apply_KH",
    "apply_KH_inverse",
    "beta_fn",
    "c0_constant",
    "frac_derivative",
    "frac_integral",
    "gamma_fn",
    "kh_kernel",
    "kh_kernel_deriv",
    "FbmPath",
    "HolderEstimate",
    "WienerPath",
    "covariance",
    "fbm_from_wiener",
    "fernique_check",
    "holder_norm",
    "sample_fbm_cholesky",
    "sample_wiener",
    "sup_norm",
    "ModelSpec",
    "Segment",
    "build_degenerate_structure",
    "check_stepsize_conditions",
    "get_model",
    "hamiltonian_example",
    "phi_constants",
    "segment_at",
    "truncated_segment",
    "SolutionPath",
    "moment_bound_check",
    "solve_em_truncated",
    "solve_reference",
    "DriftDiscrepancy",
    "WeightPath",
    "compute_h",
    "girsanov_weight",
    "kh_inverse_of_running_integral",
    "weight_R_delta",
    "weight_R_xi",
    "ConvergenceConfig",
    "WeakErrorReport",
    "estimate_order",
    "run_study",
    "weak_error",
]
