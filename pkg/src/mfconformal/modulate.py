"""Modulation functions shaping the local width of prediction bands.

Four families are built from residual curves, all strictly positive and
normalized to unit total integral (the canonical representative of each
scaling-equivalence class):

- constant ("s0"): no modulation;
- standard deviation ("sigma"): pointwise sample std of training residuals;
- trimmed max envelope ("sbar"): pointwise max over the training residual
  curves whose raw sup-score falls at or below a level-dependent quantile;
- calibration-side envelope ("sbar_c"): same construction on the calibration
  residuals, used for efficiency comparisons rather than band building.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    Grid,
    MFConformalError,
    MFCurve,
    order_stat_index,
    smoothed_order_stat_index,
    sup_abs,
    total_integral,
)

__all__ = [
    "ModulationSet",
    "TrimConfig",
    "PathologicalDataError",
    "QuantileIndexError",
    "s_const",
    "s_sigma",
    "s_bar",
    "s_bar_c",
    "make_modulation",
    "trimmed_envelope",
    "zero_adjust",
]

LABELS = ("s0", "sigma", "sbar", "sbar_c")

# Relative size of the positive value added where an envelope vanishes.
ZERO_ADJUST_REL = 1e-6

NORMALIZATION_TOL = 1e-10


class PathologicalDataError(MFConformalError, ValueError):
    """All residuals vanish identically; no modulation can be built."""


class QuantileIndexError(MFConformalError, ValueError):
    """The requested order-statistic rank falls outside 1..count."""


@dataclass(frozen=True)
class TrimConfig:
    """Level and conformal mode entering the envelope trimming rank."""

    alpha: float
    mode: str = "split"
    tau: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.mode not in ("split", "smoothed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "smoothed":
            if self.tau is None or not 0.0 <= self.tau <= 1.0:
                raise ValueError("smoothed mode needs tau in [0, 1]")

    def rank(self, count: int) -> int:
        """1-based trimming rank for ``count`` residual curves. May exceed
        ``count`` (keep everything) or, in smoothed mode, be < 1."""
        if self.mode == "split":
            return order_stat_index(count, self.alpha)
        return smoothed_order_stat_index(count, self.alpha, self.tau)


@dataclass(frozen=True, eq=False)
class ModulationSet:
    """Strictly positive sampled modulation functions on a grid.

    ``unit_integral`` marks the canonical normalized representative; the
    ``scale`` method produces deliberately denormalized members of the same
    equivalence class (bands built from them must coincide).
    """

    grid: Grid
    fns: tuple[np.ndarray, ...]
    label: str
    unit_integral: bool = True

    def __post_init__(self):
        self.grid.validate_values(self.fns, what="modulation set")
        fns = []
        for j, f in enumerate(self.fns):
            arr = np.ascontiguousarray(f, dtype=float)
            if not np.all(np.isfinite(arr)) or not np.all(arr > 0):
                raise ValueError(
                    f"modulation component {j} must be strictly positive and finite"
                )
            arr.setflags(write=False)
            fns.append(arr)
        if self.unit_integral:
            tot = total_integral(fns, self.grid)
            if abs(tot - 1.0) > NORMALIZATION_TOL:
                raise ValueError(
                    f"modulation set integrates to {tot!r}, expected 1"
                )
        object.__setattr__(self, "fns", tuple(fns))

    @property
    def total(self) -> float:
        return total_integral(self.fns, self.grid)

    def scale(self, factor: float) -> "ModulationSet":
        """Positive rescaling; the result is no longer claimed normalized."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return replace(
            self,
            fns=tuple(factor * f for f in self.fns),
            unit_integral=False,
        )


def _normalize(fns: list[np.ndarray], grid: Grid, label: str) -> ModulationSet:
    tot = total_integral(fns, grid)
    return ModulationSet(grid=grid, fns=tuple(f / tot for f in fns), label=label)


def zero_adjust(fns: list[np.ndarray]) -> list[np.ndarray]:
    """Replace exact zeros by a small positive value.

    The value is ``ZERO_ADJUST_REL`` times the global maximum over all
    components, keeping the adjustment scale-free. Functions that are already
    strictly positive are returned unchanged. Raises
    :class:`PathologicalDataError` when everything is zero.
    """
    gmax = max(float(f.max()) for f in fns)
    if gmax <= 0.0:
        raise PathologicalDataError(
            "residual envelope vanishes identically; cannot modulate"
        )
    eps = ZERO_ADJUST_REL * gmax
    return [np.where(f == 0.0, eps, f) for f in fns]


def s_const(grid: Grid) -> ModulationSet:
    """Constant modulation 1 / sum_j |T_j| (no modulation)."""
    value = 1.0 / grid.measure
    fns = tuple(np.full(c.size, value) for c in grid.components)
    return ModulationSet(grid=grid, fns=fns, label="s0")


def s_sigma(train_residuals: list[MFCurve], grid: Grid) -> ModulationSet:
    """Pointwise sample standard deviation of the residuals, normalized.

    Uses divisor m-1; the choice is immaterial after normalization. Grid
    points where the std vanishes receive the standard zero adjustment.
    """
    if len(train_residuals) < 2:
        raise ValueError("s_sigma needs at least 2 residual curves")
    for r in train_residuals:
        grid.validate_values(r.values, what="residual")
    stds = [
        np.std(np.stack([r.values[j] for r in train_residuals]), axis=0, ddof=1)
        for j in range(grid.p)
    ]
    return _normalize(zero_adjust(stds), grid, "sigma")


def trimmed_envelope(
    residuals: list[MFCurve], grid: Grid, cfg: TrimConfig
) -> tuple[np.ndarray, ...] | None:
    """Pointwise max of the residual curves kept by the trimming rule.

    This is the raw (pre-adjustment, pre-normalization) numerator of the
    envelope modulation families. The curves kept are those whose raw
    sup-score is at most the rank-th smallest sup-score; a rank above the
    curve count keeps everything. Returns ``None`` when the smoothed rank is
    below 1 (callers fall back to the constant family).
    """
    count = len(residuals)
    if count < 1:
        raise ValueError("need at least one residual curve")
    for r in residuals:
        grid.validate_values(r.values, what="residual")
    rank = cfg.rank(count)
    if rank < 1:
        return None
    if rank > count:
        kept = list(residuals)
    else:
        scores = np.array([sup_abs(r) for r in residuals])
        cutoff = np.sort(scores)[rank - 1]
        kept = [r for r, w in zip(residuals, scores) if w <= cutoff]
    return tuple(
        np.max(np.stack([np.abs(r.values[j]) for r in kept]), axis=0)
        for j in range(grid.p)
    )


def s_bar(
    train_residuals: list[MFCurve], grid: Grid, cfg: TrimConfig
) -> ModulationSet:
    """Trimmed max-envelope modulation built from training residuals.

    In smoothed mode a rank below 1 degenerates to the constant family by
    convention.
    """
    env = trimmed_envelope(train_residuals, grid, cfg)
    if env is None:
        return replace(s_const(grid), label="sbar")
    return _normalize(zero_adjust(list(env)), grid, "sbar")


def s_bar_c(
    calib_residuals: list[MFCurve], grid: Grid, cfg: TrimConfig
) -> ModulationSet:
    """Calibration-side counterpart of :func:`s_bar`.

    Unlike the training-side family, the trimming rank must be a valid
    calibration order statistic (for split mode this means
    ``alpha >= 1/(l+1)``); anything else raises :class:`QuantileIndexError`.
    """
    count = len(calib_residuals)
    if count < 1:
        raise ValueError("need at least one residual curve")
    rank = cfg.rank(count)
    if not 1 <= rank <= count:
        raise QuantileIndexError(
            f"rank {rank} outside 1..{count}; for split mode this needs "
            f"alpha >= 1/(l+1) = {1.0 / (count + 1):.6g}"
        )
    env = trimmed_envelope(calib_residuals, grid, cfg)
    return _normalize(zero_adjust(list(env)), grid, "sbar_c")


def make_modulation(
    label: str,
    residuals: list[MFCurve],
    grid: Grid,
    cfg: TrimConfig | None = None,
) -> ModulationSet:
    """Build a modulation set by label ("s0", "sigma" or "sbar")."""
    if label == "s0":
        return s_const(grid)
    if label == "sigma":
        return s_sigma(residuals, grid)
    if label == "sbar":
        if cfg is None:
            raise ValueError("sbar needs a TrimConfig")
        return s_bar(residuals, grid, cfg)
    raise ValueError(f"unknown modulation label {label!r}")
