"""Monotone post-hoc recalibrators."""

from .calibrators import (
    Calibrator,
    CalibratorConfig,
    IdentityCalibrator,
    calibrator_from_dict,
    calibrator_to_dict,
    canonical_method,
    clip_step_levels,
    fit_calibrator,
    load_calibrator,
    predict,
    roc_auc,
    save_calibrator,
)
from .isotonic import BinnedFit, IsotonicFit, SortedSample, binned_fit, pav_isotonic, quantile_bins
from .kernel import kernel_presmooth, nadaraya_watson, triweight
from .platt import PlattFit, platt_fit
from .qp import kkt_residuals, solve_monotone_qp
from .spline import (
    MonotoneSplineFit,
    PSplineFit,
    c2_spline_calibrate,
    monotone_spline_calibrate,
    monotone_spline_fit,
    pspline_fit,
    select_lambda,
)

__all__ = [
    "BinnedFit",
    "Calibrator",
    "CalibratorConfig",
    "IdentityCalibrator",
    "IsotonicFit",
    "MonotoneSplineFit",
    "PSplineFit",
    "PlattFit",
    "SortedSample",
    "binned_fit",
    "c2_spline_calibrate",
    "calibrator_from_dict",
    "calibrator_to_dict",
    "canonical_method",
    "clip_step_levels",
    "fit_calibrator",
    "kernel_presmooth",
    "kkt_residuals",
    "load_calibrator",
    "monotone_spline_calibrate",
    "monotone_spline_fit",
    "nadaraya_watson",
    "pav_isotonic",
    "platt_fit",
    "predict",
    "pspline_fit",
    "quantile_bins",
    "roc_auc",
    "save_calibrator",
    "select_lambda",
    "solve_monotone_qp",
    "triweight",
]
