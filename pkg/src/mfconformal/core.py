"""Discretized multivariate functional data.

Curves with p components are represented by their values on a fixed
per-component grid of domain points. Every supremum over a domain becomes a
maximum over grid points and every integral a weighted sum, so the grid's
quadrature weights are part of the data model. All types here are immutable
after construction (arrays are stored read-only) and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "MFConformalError",
    "ShapeError",
    "ComponentGrid",
    "Grid",
    "MFCurve",
    "Covariates",
    "Dataset",
    "Split",
    "uniform_grid",
    "trapezoid_weights",
    "sup_abs",
    "total_integral",
    "random_split",
    "order_stat_index",
    "smoothed_order_stat_index",
    "theoretical_coverage",
]


class MFConformalError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MFConformalError, ValueError):
    """Input does not conform to the expected grid layout."""


def _readonly_vector(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoid quadrature weights for an ascending vector of points.

    Endpoints are half-weighted; the weights sum exactly to the span
    ``points[-1] - points[0]``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 2:
        raise ShapeError("need at least two ascending points")
    w = np.empty_like(pts)
    w[0] = (pts[1] - pts[0]) / 2.0
    w[-1] = (pts[-1] - pts[-2]) / 2.0
    if pts.size > 2:
        w[1:-1] = (pts[2:] - pts[:-2]) / 2.0
    return w


@dataclass(frozen=True, eq=False)
class ComponentGrid:
    """Discretization of one component domain: ascending points plus
    strictly positive quadrature weights summing to the domain length."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _readonly_vector(self.points, "points")
        w = _readonly_vector(self.weights, "weights")
        if pts.size < 2:
            raise ShapeError("a component grid needs at least 2 points")
        if not np.all(np.diff(pts) > 0):
            raise ShapeError("grid points must be strictly increasing")
        if w.shape != pts.shape:
            raise ShapeError("weights must have the same length as points")
        if not np.all(w > 0):
            raise ShapeError("quadrature weights must be strictly positive")
        span = pts[-1] - pts[0]
        if abs(float(w.sum()) - span) > 1e-6 * max(1.0, span):
            raise ShapeError(
                f"weights sum to {w.sum():g} but the domain length is {span:g}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_points(cls, points) -> "ComponentGrid":
        """Component grid with trapezoid weights on the given points."""
        pts = np.asarray(points, dtype=float)
        return cls(pts, trapezoid_weights(pts))

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def measure(self) -> float:
        """Length |T_j| of the component domain (sum of the weights)."""
        return float(self.weights.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComponentGrid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )


@dataclass(frozen=True, eq=False)
class Grid:
    """Per-component discretization of the p domains."""

    components: tuple[ComponentGrid, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise ShapeError("a grid needs at least one component")
        if not all(isinstance(c, ComponentGrid) for c in comps):
            raise ShapeError("grid components must be ComponentGrid instances")
        object.__setattr__(self, "components", comps)

    @property
    def p(self) -> int:
        return len(self.components)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.components)

    @property
    def measure(self) -> float:
        """Total length of all component domains, sum_j |T_j|."""
        return float(sum(c.measure for c in self.components))

    def validate_values(self, values: Sequence[np.ndarray], what: str = "curve"):
        if len(values) != self.p:
            raise ShapeError(
                f"{what} has {len(values)} components, grid has {self.p}"
            )
        for j, (v, c) in enumerate(zip(values, self.components)):
            if np.shape(v) != (c.size,):
                raise ShapeError(
                    f"{what} component {j} has shape {np.shape(v)}, "
                    f"expected ({c.size},)"
                )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return len(self.components) == len(other.components) and all(
            a == b for a, b in zip(self.components, other.components)
        )


def uniform_grid(
    n_points: int = 100,
    domain: tuple[float, float] = (0.0, 1.0),
    p: int = 1,
) -> Grid:
    """Grid with ``p`` identical components of equispaced points on ``domain``
    and trapezoid weights."""
    a, b = domain
    if not (n_points >= 2 and b > a):
        raise ShapeError("need n_points >= 2 and a non-empty domain")
    comp = ComponentGrid.from_points(np.linspace(a, b, n_points))
    return Grid((comp,) * p)


@dataclass(frozen=True, eq=False)
class MFCurve:
    """One multivariate functional datum: p sampled component curves."""

    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        vals = tuple(
            _readonly_vector(v, f"curve component {j}")
            for j, v in enumerate(self.values)
        )
        if len(vals) < 1:
            raise ShapeError("a curve needs at least one component")
        object.__setattr__(self, "values", vals)

    @property
    def p(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Covariates:
    """Named covariates for one observation.

    ``scalar`` maps names to real values; ``functional`` maps names to one
    sampled curve per component (each matching the grid of its component).
    Which names feed which component's regression is declared by the
    regressor specification, not here.
    """

    scalar: dict[str, float] = field(default_factory=dict)
    functional: dict[str, tuple[np.ndarray, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "scalar", {k: float(v) for k, v in self.scalar.items()}
        )
        object.__setattr__(
            self,
            "functional",
            {
                k: tuple(_readonly_vector(a, f"functional covariate {k!r}") for a in arrs)
                for k, arrs in self.functional.items()
            },
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Regression pairs sharing one grid."""

    grid: Grid
    pairs: tuple[tuple[Covariates, MFCurve], ...]

    def __post_init__(self):
        pairs = tuple(self.pairs)
        if len(pairs) < 2:
            raise ShapeError("a dataset needs at least 2 pairs")
        for i, (x, y) in enumerate(pairs):
            self.grid.validate_values(y.values, what=f"curve {i}")
            for name, arrs in x.functional.items():
                self.grid.validate_values(
                    arrs, what=f"functional covariate {name!r} of pair {i}"
                )
        object.__setattr__(self, "pairs", pairs)

    @property
    def n(self) -> int:
        return len(self.pairs)

    def covariates(self, i: int) -> Covariates:
        return self.pairs[i][0]

    def curve(self, i: int) -> MFCurve:
        return self.pairs[i][1]


@dataclass(frozen=True)
class Split:
    """Disjoint training/calibration index sets partitioning 0..n-1."""

    train_idx: tuple[int, ...]
    calib_idx: tuple[int, ...]

    def __post_init__(self):
        train = tuple(int(i) for i in self.train_idx)
        calib = tuple(int(i) for i in self.calib_idx)
        if len(train) < 1 or len(calib) < 1:
            raise ShapeError("both split parts must be non-empty")
        n = len(train) + len(calib)
        if sorted(train + calib) != list(range(n)):
            raise ShapeError("split parts must partition 0..n-1 exactly")
        object.__setattr__(self, "train_idx", train)
        object.__setattr__(self, "calib_idx", calib)

    @property
    def m(self) -> int:
        return len(self.train_idx)

    @property
    def l(self) -> int:
        return len(self.calib_idx)


def sup_abs(curve: MFCurve) -> float:
    """Largest absolute value of a curve over all components and grid points."""
    return max(float(np.abs(v).max()) for v in curve.values)


def total_integral(fns: Sequence[np.ndarray], grid: Grid) -> float:
    """Sum over components of the quadrature integral of each sampled function."""
    grid.validate_values(fns, what="integrand")
    return float(
        sum(float(np.dot(c.weights, f)) for c, f in zip(grid.components, fns))
    )


def random_split(n: int, l: int, seed=None, strategy: str = "uniform") -> Split:
    """Partition ``0..n-1`` into training (size ``n - l``) and calibration
    (size ``l``) index sets.

    Parameters
    ----------
    n, l : int
        Total number of observations and calibration-set size, ``1 <= l <= n-1``.
    seed : int, sequence of ints, SeedSequence or Generator, optional
        Randomness source for the uniform strategy; ignored by ``"parity"``.
    strategy : {"uniform", "parity"}
        ``"uniform"`` draws a uniformly random partition. ``"parity"`` labels
        observations as days 1..n and assigns odd days to training and even
        days to calibration; if the even-day count differs from ``l``, days
        are reassigned one at a time choosing the day closest to the center
        day (n+1)/2, with ties broken toward the earlier day.
    """
    if not (1 <= l <= n - 1):
        raise ValueError(f"need 1 <= l <= n-1, got l={l}, n={n}")
    if strategy == "uniform":
        perm = np.random.default_rng(seed).permutation(n)
        calib = sorted(int(i) for i in perm[:l])
        train = sorted(int(i) for i in perm[l:])
    elif strategy == "parity":
        center = (n + 1) / 2.0
        train_days = [d for d in range(1, n + 1) if d % 2 == 1]
        calib_days = [d for d in range(1, n + 1) if d % 2 == 0]
        while len(calib_days) > l:
            day = min(calib_days, key=lambda d: (abs(d - center), d))
            calib_days.remove(day)
            train_days.append(day)
        while len(calib_days) < l:
            day = min(train_days, key=lambda d: (abs(d - center), d))
            train_days.remove(day)
            calib_days.append(day)
        train = sorted(d - 1 for d in train_days)
        calib = sorted(d - 1 for d in calib_days)
    else:
        raise ValueError(f"unknown split strategy {strategy!r}")
    return Split(tuple(train), tuple(calib))


# Order-statistic index arithmetic. Products like (l+1)*(1-alpha) are exact
# integers for many (l, alpha) pairs used in calibration; floating point can
# land one ulp off, so values within a relative 1e-9 of an integer are
# snapped before applying floor/ceil.
_SNAP_TOL = 1e-9


def _snap_floor(x: float) -> int:
    r = round(x)
    if abs(x - r) <= _SNAP_TOL * max(1.0, abs(x)):
        return int(r)
    return math.floor(x)


def _snap_ceil(x: float) -> int:
    r = round(x)
    if abs(x - r) <= _SNAP_TOL * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


def order_stat_index(count: int, alpha: float) -> int:
    """1-based rank ceil((count+1)*(1-alpha)) of the calibration quantile.

    Computed as ``count + 1 - floor((count+1)*alpha)``, which is the same
    integer but avoids forming ``1 - alpha``.
    """
    return count + 1 - _snap_floor((count + 1) * alpha)

def smoothed_order_stat_index(count: int, alpha: float, tau: float) -> int:
    """1-based rank ceil(count + tau - (count+1)*alpha) used in smoothed mode.

    May be < 1 (band would be empty) or > count (band is infinite); callers
    decide how to handle those regimes.
    """
    return _snap_ceil(count + tau - (count + 1) * alpha)


def theoretical_coverage(l: int, alpha: float) -> float:
    """Exact unconditional coverage 1 - floor((l+1)*alpha)/(l+1) of the
    non-smoothed calibrated band."""
    return 1.0 - _snap_floor((l + 1) * alpha) / (l + 1)
