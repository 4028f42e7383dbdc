"""Fast multivariate Ornstein-Uhlenbeck latent factor models.

Orthogonal loadings plus independent AR(1) factors, fitted by closed-form
EM with scalar Kalman smoothing, together with exact DMD as a baseline,
factor-number selection and Green's-operator slip reconstruction.
"""

from ._accel import backend_name
from .dmd import DmdModel, dmd_reconstruct, exact_dmd
from .em import FitOptions, FmouFit, FmouParams, fit, marginal_loglik, signal_intervals, solve_rho_cubic
from .errors import (
    AmbiguityError,
    ConsistencyError,
    ContractError,
    DataError,
    DegenerateFilterError,
    FmouError,
    RankError,
    SelectionError,
    UniquenessError,
)
from .greens import GreensOperator, SlipField, augment_frame_motion, reconstruct_slip, slip_rates, svd_truncate
from .kalman import FactorParams, kalman_forward, rts_smooth
from .metrics import EvalReport, interval_coverage, principal_angles, rmse_mean, rmse_slip
from .selection import SelectionReport, select_d_ic, select_d_vm

__version__ = "0.1.0"

__all__ = [
    "AmbiguityError",
    "ConsistencyError",
    "ContractError",
    "DataError",
    "DegenerateFilterError",
    "DmdModel",
    "EvalReport",
    "FactorParams",
    "FitOptions",
    "FmouError",
    "FmouFit",
    "FmouParams",
    "GreensOperator",
    "RankError",
    "SelectionError",
    "SelectionReport",
    "SlipField",
    "UniquenessError",
    "augment_frame_motion",
    "backend_name",
    "dmd_reconstruct",
    "exact_dmd",
    "fit",
    "interval_coverage",
    "kalman_forward",
    "marginal_loglik",
    "principal_angles",
    "reconstruct_slip",
    "rmse_mean",
    "rmse_slip",
    "rts_smooth",
    "select_d_ic",
    "select_d_vm",
    "signal_intervals",
    "slip_rates",
    "solve_rho_cubic",
    "svd_truncate",
]
