"""Simultaneous conformal prediction bands for multivariate functional
responses.

Split and smoothed split conformal calibration around arbitrary regression
estimators, with modulation functions shaping the band width locally, plus a
Monte Carlo harness for coverage and efficiency studies and a CLI for CSV
data.
"""

__version__ = "0.1.0"

from .conformal import (
    Band,
    BandPredictor,
    Calibration,
    Scores,
    band_size,
    calibrate,
    calibrate_smoothed,
    calibrate_split,
    calibration_scores,
    contains,
    cub_band,
    make_band,
    p_value,
    p_value_smoothed,
    pointwise_band,
    score,
)
from .core import (
    ComponentGrid,
    Covariates,
    Dataset,
    Grid,
    MFConformalError,
    MFCurve,
    ShapeError,
    Split,
    random_split,
    sup_abs,
    theoretical_coverage,
    total_integral,
    uniform_grid,
)
from .harness import StudyConfig, StudyReport, coverage_ci, run_study, size_quartiles
from .modulate import ModulationSet, TrimConfig, s_bar, s_bar_c, s_const, s_sigma
from .regress import FittedRegressor, RegressorSpec, fit, predict, residuals
from .simgen import ScenarioSpec, eval_bspline, generate, uniform_bspline_basis

__all__ = [
    "__version__",
    "Band",
    "BandPredictor",
    "Calibration",
    "ComponentGrid",
    "Covariates",
    "Dataset",
    "FittedRegressor",
    "Grid",
    "MFConformalError",
    "MFCurve",
    "ModulationSet",
    "RegressorSpec",
    "ScenarioSpec",
    "Scores",
    "ShapeError",
    "Split",
    "StudyConfig",
    "StudyReport",
    "TrimConfig",
    "band_size",
    "calibrate",
    "calibrate_smoothed",
    "calibrate_split",
    "calibration_scores",
    "contains",
    "coverage_ci",
    "cub_band",
    "eval_bspline",
    "fit",
    "generate",
    "make_band",
    "p_value",
    "p_value_smoothed",
    "pointwise_band",
    "predict",
    "random_split",
    "residuals",
    "run_study",
    "s_bar",
    "s_bar_c",
    "s_const",
    "s_sigma",
    "score",
    "size_quartiles",
    "sup_abs",
    "theoretical_coverage",
    "total_integral",
    "uniform_bspline_basis",
    "uniform_grid",
]
