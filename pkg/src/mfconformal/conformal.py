"""Calibration and simultaneous band construction.

A band predictor combines a fitted regressor, a modulation set and a
calibrated radius: the band for a new observation is
``prediction(t) +- radius * s_j(t)`` simultaneously over all components and
grid points. Two calibrators are provided: the plain split one (closed bands,
valid and often conservative coverage) and the smoothed one (randomized by a
uniform tie-breaker, exact coverage, open or closed bands). The concatenated
per-component and pointwise constructions are included for comparison; both
are provably subsets of the simultaneous band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dataclasses_field

import numpy as np

from .core import (
    Covariates,
    Dataset,
    MFConformalError,
    MFCurve,
    ShapeError,
    Split,
    _snap_floor,
    order_stat_index,
    smoothed_order_stat_index,
    total_integral,
)
from .modulate import ModulationSet
from .regress import FittedRegressor, predict, residuals

__all__ = [
    "Scores",
    "Calibration",
    "BandPredictor",
    "Band",
    "EmptyBandError",
    "InfiniteBandError",
    "score",
    "calibration_scores",
    "calibrate_split",
    "calibrate_smoothed",
    "calibrate",
    "make_band",
    "contains",
    "p_value",
    "p_value_smoothed",
    "band_size",
    "cub_radii",
    "cub_band",
    "pointwise_radii",
    "pointwise_band",
]


class EmptyBandError(MFConformalError, ValueError):
    """alpha lies above the smoothed feasibility range; the band is empty."""


class InfiniteBandError(MFConformalError, ValueError):
    """Operation undefined for an infinite (whole-space) band."""


@dataclass(frozen=True, eq=False)
class Scores:
    """Nonconformity scores of the calibration set, with a sorted copy."""

    values: np.ndarray
    sorted_values: np.ndarray = dataclasses_field(init=False, default=None)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ShapeError("scores must be a non-empty vector")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("scores must be finite and nonnegative")
        vals.setflags(write=False)
        srt = np.sort(vals)
        srt.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sorted_values", srt)

    @property
    def l(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Calibration:
    """Outcome of a calibration: the band half-width multiplier and whether
    the band is closed, open or the whole space."""

    radius: float
    closure: str  # "closed" | "open"
    infinite: bool = False

    def __post_init__(self):
        if self.closure not in ("closed", "open"):
            raise ValueError(f"unknown closure {self.closure!r}")
        if not self.infinite and not self.radius >= 0:
            raise ValueError("radius must be nonnegative")


@dataclass(frozen=True, eq=False)
class BandPredictor:
    """Calibrated predictor: everything needed to emit a band for new
    covariates."""

    model: FittedRegressor
    modulation: ModulationSet
    radius: float
    closure: str
    alpha: float
    mode: str
    tau: float | None = None
    infinite: bool = False

    def __post_init__(self):
        if self.mode not in ("split", "smoothed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "split" and self.closure != "closed":
            raise ValueError("split-mode bands are closed")
        if not self.infinite and not self.radius >= 0:
            raise ValueError("radius must be nonnegative")
        if self.model.grid != self.modulation.grid:
            raise ShapeError("model and modulation grids differ")


@dataclass(frozen=True, eq=False)
class Band:
    """Sampled lower/upper bounds, one pair of curves per component."""

    lower: tuple[np.ndarray, ...] | None
    upper: tuple[np.ndarray, ...] | None
    closure: str = "closed"
    infinite: bool = False

    def __post_init__(self):
        if self.infinite:
            if self.lower is not None or self.upper is not None:
                raise ValueError("an infinite band carries no bounds")
            return
        low = tuple(np.asarray(a, dtype=float) for a in self.lower)
        up = tuple(np.asarray(a, dtype=float) for a in self.upper)
        if len(low) != len(up):
            raise ShapeError("lower and upper need the same component count")
        for j, (lo, hi) in enumerate(zip(low, up)):
            if lo.shape != hi.shape:
                raise ShapeError(f"component {j} bounds have mismatched shapes")
            if np.any(lo > hi):
                raise ValueError(f"component {j} has lower > upper")
        object.__setattr__(self, "lower", low)
        object.__setattr__(self, "upper", up)


def score(residual: MFCurve, s: ModulationSet) -> float:
    """Nonconformity score: max over components and grid points of
    |residual| / s."""
    s.grid.validate_values(residual.values, what="residual")
    return max(
        float(np.max(np.abs(r) / f)) for r, f in zip(residual.values, s.fns)
    )


def calibration_scores(
    dataset: Dataset, split: Split, model: FittedRegressor, s: ModulationSet
) -> Scores:
    """Scores of the calibration observations under the fitted model."""
    res = residuals(model, dataset, split.calib_idx)
    return Scores(np.array([score(r, s) for r in res]))


def calibrate_split(scores: Scores, alpha: float) -> Calibration:
    """Split calibration: radius is the ceil((l+1)(1-alpha))-th smallest
    score; below the feasibility bound alpha < 1/(l+1) the band is the whole
    space."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    l = scores.l
    rank = order_stat_index(l, alpha)
    if rank > l:
        return Calibration(radius=math.nan, closure="closed", infinite=True)
    return Calibration(radius=float(scores.sorted_values[rank - 1]), closure="closed")


def calibrate_smoothed(scores: Scores, alpha: float, tau: float) -> Calibration:
    """Smoothed calibration with tie-breaker ``tau``.

    The radius is the ceil(l + tau - (l+1)alpha)-th smallest score. Whether
    the band is closed or open at that radius depends on tau relative to a
    threshold built from the tie counts around the selected order statistic
    (ties can only arise from duplicated inputs). At ``tau = 1`` this
    coincides with :func:`calibrate_split`.

    Raises
    ------
    EmptyBandError
        If alpha is at or above the upper feasibility bound (l+tau)/(l+1).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    l = scores.l
    rank = smoothed_order_stat_index(l, alpha, tau)
    if rank > l:
        return Calibration(radius=math.nan, closure="closed", infinite=True)
    if rank < 1:
        raise EmptyBandError(
            f"alpha={alpha} is at or above (l+tau)/(l+1)={(l + tau) / (l + 1):.6g}; "
            "the smoothed band is empty"
        )
    srt = scores.sorted_values
    w = float(srt[rank - 1])
    right_ties = int(np.count_nonzero(srt[rank:] == w))
    left_ties = int(np.count_nonzero(srt[: rank - 1] == w))
    threshold = (
        (l + 1) * alpha - _snap_floor((l + 1) * alpha - tau) + right_ties
    ) / (right_ties + left_ties + 2)
    closure = "closed" if tau > threshold else "open"
    return Calibration(radius=w, closure=closure)


def calibrate(
    dataset: Dataset,
    split: Split,
    model: FittedRegressor,
    s: ModulationSet,
    alpha: float,
    mode: str = "split",
    tau: float | None = None,
) -> BandPredictor:
    """End-to-end calibration: score the calibration set and wrap the result
    into a band predictor."""
    scores = calibration_scores(dataset, split, model, s)
    if mode == "split":
        cal = calibrate_split(scores, alpha)
    elif mode == "smoothed":
        if tau is None:
            raise ValueError("smoothed mode needs a tau realization")
        cal = calibrate_smoothed(scores, alpha, tau)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return BandPredictor(
        model=model,
        modulation=s,
        radius=cal.radius,
        closure=cal.closure,
        alpha=alpha,
        mode=mode,
        tau=tau,
        infinite=cal.infinite,
    )


def make_band(
    pred: BandPredictor, x: Covariates, truncate_at_zero: bool = False
) -> Band:
    """Band around the prediction at ``x``: prediction -+ radius * s.

    ``truncate_at_zero`` clamps both bounds at 0 after construction (for
    nonnegative responses)."""
    if pred.infinite:
        return Band(lower=None, upper=None, closure=pred.closure, infinite=True)
    yhat = predict(pred.model, x)
    lower, upper = [], []
    for v, f in zip(yhat.values, pred.modulation.fns):
        half = pred.radius * f
        lo, hi = v - half, v + half
        if truncate_at_zero:
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        lower.append(lo)
        upper.append(hi)
    return Band(lower=tuple(lower), upper=tuple(upper), closure=pred.closure)


def contains(band: Band, y: MFCurve) -> bool:
    """Whether the curve lies inside the band at every component and grid
    point (strictly inside when the band is open)."""
    if band.infinite:
        return True
    if len(y.values) != len(band.lower):
        raise ShapeError("curve and band have different component counts")
    for v, lo, hi in zip(y.values, band.lower, band.upper):
        if v.shape != lo.shape:
            raise ShapeError("curve and band shapes differ")
        if band.closure == "closed":
            ok = np.all((lo <= v) & (v <= hi))
        else:
            ok = np.all((lo < v) & (v < hi))
        if not ok:
            return False
    return True


def p_value(calib_scores: Scores, new_score: float) -> float:
    """Conformal p-value: fraction of calibration scores at least the new
    one, counting the new observation itself."""
    count = int(np.count_nonzero(calib_scores.values >= new_score)) + 1
    return count / (calib_scores.l + 1)


def p_value_smoothed(calib_scores: Scores, new_score: float, tau: float) -> float:
    """Smoothed conformal p-value: ties (including the new observation
    against itself) weighted by ``tau``. Equals :func:`p_value` at tau = 1."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    strict = int(np.count_nonzero(calib_scores.values > new_score))
    ties = int(np.count_nonzero(calib_scores.values == new_score)) + 1
    return (strict + tau * ties) / (calib_scores.l + 1)


def band_size(pred: BandPredictor) -> float:
    """Band size 2 * radius: the summed area between upper and lower bounds.

    Recomputes the area by quadrature as a self-check of the modulation's
    unit-integral convention.
    """
    if pred.infinite:
        raise InfiniteBandError("an infinite band has no finite size")
    q = 2.0 * pred.radius
    by_quadrature = q * total_integral(pred.modulation.fns, pred.modulation.grid)
    if abs(by_quadrature - q) > 1e-10 * max(1.0, abs(q)):
        raise MFConformalError(
            f"band size self-check failed: 2*radius={q!r} but quadrature "
            f"gives {by_quadrature!r}; is the modulation set normalized?"
        )
    return q


def cub_radii(
    dataset: Dataset,
    split: Split,
    model: FittedRegressor,
    s: ModulationSet,
    alpha: float,
) -> np.ndarray:
    """Per-component radii of the concatenated univariate construction.

    Component j is calibrated on the per-component sup scores alone; each
    radius is bounded above by the simultaneous radius. Undefined below the
    feasibility bound alpha < 1/(l+1).
    """
    l = split.l
    rank = order_stat_index(l, alpha)
    if rank > l:
        raise ValueError(f"alpha={alpha} below the feasibility bound 1/(l+1)")
    res = residuals(model, dataset, split.calib_idx)
    p = dataset.grid.p
    radii = np.empty(p)
    for j in range(p):
        comp_scores = np.sort(
            [float(np.max(np.abs(r.values[j]) / s.fns[j])) for r in res]
        )
        radii[j] = comp_scores[rank - 1]
    return radii


def cub_band(
    dataset: Dataset,
    split: Split,
    model: FittedRegressor,
    s: ModulationSet,
    alpha: float,
    x: Covariates,
) -> Band:
    """Concatenation of the p independently calibrated univariate bands.

    Below the feasibility bound every univariate band is the whole space, so
    the concatenation is returned as an infinite band."""
    if order_stat_index(split.l, alpha) > split.l:
        return Band(lower=None, upper=None, closure="closed", infinite=True)
    radii = cub_radii(dataset, split, model, s, alpha)
    yhat = predict(model, x)
    lower = tuple(v - k * f for v, k, f in zip(yhat.values, radii, s.fns))
    upper = tuple(v + k * f for v, k, f in zip(yhat.values, radii, s.fns))
    return Band(lower=lower, upper=upper, closure="closed")


def pointwise_radii(
    dataset: Dataset,
    split: Split,
    model: FittedRegressor,
    s: ModulationSet,
    alpha: float,
) -> tuple[np.ndarray, ...]:
    """Per-point radii: the calibration order statistic of the modulated
    absolute residuals separately at every component and grid point."""
    l = split.l
    rank = order_stat_index(l, alpha)
    if rank > l:
        raise ValueError(f"alpha={alpha} below the feasibility bound 1/(l+1)")
    res = residuals(model, dataset, split.calib_idx)
    out = []
    for j in range(dataset.grid.p):
        stacked = np.stack([np.abs(r.values[j]) / s.fns[j] for r in res])
        out.append(np.sort(stacked, axis=0)[rank - 1])
    return tuple(out)


def pointwise_band(
    dataset: Dataset,
    split: Split,
    model: FittedRegressor,
    s: ModulationSet,
    alpha: float,
    x: Covariates,
) -> Band:
    """Concatenation of the per-point prediction intervals (infinite below
    the feasibility bound, like :func:`cub_band`)."""
    if order_stat_index(split.l, alpha) > split.l:
        return Band(lower=None, upper=None, closure="closed", infinite=True)
    radii = pointwise_radii(dataset, split, model, s, alpha)
    yhat = predict(model, x)
    lower = tuple(v - k * f for v, k, f in zip(yhat.values, radii, s.fns))
    upper = tuple(v + k * f for v, k, f in zip(yhat.values, radii, s.fns))
    return Band(lower=lower, upper=upper, closure="closed")
