"""Conformalized data-driven reachability with PAC coverage guarantees."""

from .calibrate import (
    CalibrationMethod,
    CalibrationResult,
    ScoreKind,
    ScoreVariant,
    binary_kl,
    calibrate_all,
    empmax_bound,
    hb_pvalue,
    ltt_select,
    marginal_cp_quantile,
    n_min,
    residuals,
    scores,
)
from .models import GlobalLinearModel, LocalAffineFamily, fit_global, fit_local_affine, pseudoinverse
from .reach import ReachResult, UnattainableGuarantee, propagate, propagate_lti, propagate_lti_meas, propagate_nonlinear
from .systems import NoiseSpec, SystemKind, SystemSpec, TrajectoryBatch, simulate
from .zonotope import Zonotope, contains, linear_map, minkowski_sum, support, volume

__version__ = "0.1.0"
