"""Pluggable pointwise regression estimators for functional responses.

Each component curve is regressed on its selected covariates independently at
every grid point (a concurrent linear model). No smoothing is applied across
grid points: band validity downstream never depends on estimator quality, so
the estimators stay deliberately simple. Anything exposing the same
``fit``/``predict`` contract can be substituted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Covariates,
    Dataset,
    Grid,
    MFConformalError,
    MFCurve,
    ShapeError,
)

__all__ = [
    "RegressorSpec",
    "FittedRegressor",
    "SingularDesignError",
    "InsufficientDataError",
    "fit",
    "predict",
    "residuals",
]

KINDS = ("intercept_only", "concurrent_fos", "concurrent_fof")

# Relative singular-value cutoff below which a design is declared
# rank-deficient.
RANK_RCOND = 1e-10


class SingularDesignError(MFConformalError, ValueError):
    """The pointwise design matrix is rank deficient."""


class InsufficientDataError(MFConformalError, ValueError):
    """Fewer training observations than design columns."""


@dataclass(frozen=True)
class RegressorSpec:
    """Choice of concurrent model and per-component covariate names.

    ``terms[j]`` lists the covariate names entering component j's design (an
    intercept column is prepended when ``intercept`` is true). An empty
    ``terms`` means no covariates for any component. ``intercept_only``
    requires empty terms; ``concurrent_fos`` allows scalar covariates only;
    ``concurrent_fof`` allows scalar and functional covariates.
    """

    kind: str
    terms: tuple[tuple[str, ...], ...] = ()
    intercept: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regressor kind {self.kind!r}")
        terms = tuple(tuple(t) for t in self.terms)
        if self.kind == "intercept_only":
            if any(terms):
                raise ValueError("intercept_only admits no covariates")
            if not self.intercept:
                raise ValueError("intercept_only requires the intercept")
        if not self.intercept and (not terms or any(len(t) == 0 for t in terms)):
            raise ValueError("a component with no terms needs an intercept")
        object.__setattr__(self, "terms", terms)

    def component_terms(self, p: int) -> tuple[tuple[str, ...], ...]:
        if not self.terms:
            return ((),) * p
        if len(self.terms) != p:
            raise ShapeError(
                f"spec lists terms for {len(self.terms)} components, data has {p}"
            )
        return self.terms


@dataclass(frozen=True, eq=False)
class FittedRegressor:
    """Pointwise least-squares coefficients, one (G_j, q_j) block per
    component."""

    grid: Grid
    spec: RegressorSpec
    coefficients: tuple[np.ndarray, ...]

    def __post_init__(self):
        coefs = []
        for j, c in enumerate(self.coefficients):
            arr = np.ascontiguousarray(c, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != self.grid.components[j].size:
                raise ShapeError(
                    f"coefficient block {j} has shape {arr.shape}, expected "
                    f"({self.grid.components[j].size}, q)"
                )
            arr.setflags(write=False)
            coefs.append(arr)
        if len(coefs) != self.grid.p:
            raise ShapeError("one coefficient block per component is required")
        object.__setattr__(self, "coefficients", tuple(coefs))

    def predict(self, x: Covariates, truncate_at_zero: bool = False) -> MFCurve:
        return predict(self, x, truncate_at_zero)


def _covariate_values(x: Covariates, name: str, j: int, size: int) -> np.ndarray:
    """Values of one named covariate on component j's grid."""
    if name in x.scalar:
        return np.full(size, x.scalar[name])
    if name in x.functional:
        arr = x.functional[name][j]
        if arr.shape != (size,):
            raise ShapeError(
                f"functional covariate {name!r} component {j} has shape "
                f"{arr.shape}, expected ({size},)"
            )
        return arr
    raise ShapeError(f"covariate {name!r} missing from the observation")


def _scalar_design(
    xs: list[Covariates], names: tuple[str, ...], intercept: bool
) -> np.ndarray | None:
    """Design matrix (n_obs, q) shared by every grid point, or None when some
    covariate is functional (the design then varies along the grid)."""
    if not all(name in x.scalar for x in xs for name in names):
        return None
    cols = []
    if intercept:
        cols.append(np.ones(len(xs)))
    for name in names:
        cols.append(np.array([x.scalar[name] for x in xs]))
    return np.column_stack(cols)


def _design_stack(
    xs: list[Covariates], names: tuple[str, ...], intercept: bool, j: int, size: int
) -> np.ndarray:
    """Full design tensor of shape (n_obs, G_j, q_j)."""
    cols = []
    if intercept:
        cols.append(np.ones((len(xs), size)))
    for name in names:
        cols.append(np.stack([_covariate_values(x, name, j, size) for x in xs]))
    return np.stack(cols, axis=-1)


def fit(dataset: Dataset, train_idx, spec: RegressorSpec) -> FittedRegressor:
    """Fit the concurrent model by ordinary least squares at every grid point.

    Parameters
    ----------
    dataset : Dataset
    train_idx : iterable of int
        Indices of the training observations.
    spec : RegressorSpec

    Returns
    -------
    FittedRegressor

    Raises
    ------
    InsufficientDataError
        If the training set is smaller than a component's design dimension.
    SingularDesignError
        If a pointwise design matrix is rank deficient (smallest singular
        value below ``RANK_RCOND`` times the largest).
    """
    idx = [int(i) for i in train_idx]
    if not idx:
        raise InsufficientDataError("empty training set")
    xs = [dataset.covariates(i) for i in idx]
    ys = [dataset.curve(i) for i in idx]
    grid = dataset.grid
    terms = spec.component_terms(grid.p)
    m = len(idx)

    blocks = []
    for j, comp in enumerate(grid.components):
        q = len(terms[j]) + (1 if spec.intercept else 0)
        if q == 0:
            raise ValueError(f"component {j} has an empty design")
        if m < q:
            raise InsufficientDataError(
                f"component {j}: {m} training curves for {q} design columns"
            )
        resp = np.stack([y.values[j] for y in ys])  # (m, G_j)
        X = _scalar_design(xs, terms[j], spec.intercept)
        if X is not None:
            sol, _, rank, _ = np.linalg.lstsq(X, resp, rcond=RANK_RCOND)
            if rank < q:
                raise SingularDesignError(
                    f"singular design for component {j} (all grid points): "
                    f"rank {rank} < {q}"
                )
            blocks.append(sol.T)  # (G_j, q)
        else:
            design = _design_stack(xs, terms[j], spec.intercept, j, comp.size)
            coef = np.empty((comp.size, q))
            for g in range(comp.size):
                sol, _, rank, _ = np.linalg.lstsq(design[:, g, :], resp[:, g],
                                                  rcond=RANK_RCOND)
                if rank < q:
                    raise SingularDesignError(
                        f"singular design for component {j} at grid index {g}: "
                        f"rank {rank} < {q}"
                    )
                coef[g] = sol
            blocks.append(coef)
    return FittedRegressor(grid=grid, spec=spec, coefficients=tuple(blocks))


def predict(model, x: Covariates, truncate_at_zero: bool = False) -> MFCurve:
    """Evaluate a fitted model at one covariate value.

    ``model`` is usually a :class:`FittedRegressor`; any object exposing
    ``grid`` and ``predict(x) -> MFCurve`` can stand in (band validity never
    depends on the estimator). With ``truncate_at_zero`` the predicted curves
    are clamped at 0 from below (for responses that cannot be negative).
    """
    if not isinstance(model, FittedRegressor):
        curve = model.predict(x)
        if truncate_at_zero:
            curve = MFCurve(tuple(np.maximum(v, 0.0) for v in curve.values))
        return curve
    terms = model.spec.component_terms(model.grid.p)
    out = []
    for j, comp in enumerate(model.grid.components):
        X = _scalar_design([x], terms[j], model.spec.intercept)
        if X is not None:
            pred = (X @ model.coefficients[j].T)[0]
        else:
            design = _design_stack([x], terms[j], model.spec.intercept, j, comp.size)
            pred = np.einsum("gq,gq->g", design[0], model.coefficients[j])
        if truncate_at_zero:
            pred = np.maximum(pred, 0.0)
        out.append(pred)
    return MFCurve(tuple(out))


def residuals(model, dataset: Dataset, idx) -> list[MFCurve]:
    """Residual curves y_i - prediction for the given observation indices.

    For the built-in regressor, predictions for all observations are
    evaluated in one batch per component; other estimators are called one
    observation at a time.
    """
    idx = [int(i) for i in idx]
    if not isinstance(model, FittedRegressor):
        out = []
        for i in idx:
            x, y = dataset.pairs[i]
            yhat = predict(model, x)
            out.append(MFCurve(tuple(a - b for a, b in zip(y.values, yhat.values))))
        return out
    xs = [dataset.covariates(i) for i in idx]
    terms = model.spec.component_terms(model.grid.p)
    per_comp = []
    for j, comp in enumerate(model.grid.components):
        X = _scalar_design(xs, terms[j], model.spec.intercept)
        if X is not None:
            preds = X @ model.coefficients[j].T
        else:
            design = _design_stack(xs, terms[j], model.spec.intercept, j, comp.size)
            preds = np.einsum("igq,gq->ig", design, model.coefficients[j])
        resp = np.stack([dataset.curve(i).values[j] for i in idx])
        per_comp.append(resp - preds)
    return [
        MFCurve(tuple(block[r] for block in per_comp)) for r in range(len(idx))
    ]
