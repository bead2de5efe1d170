"""Self-contained model bundles.

A bundle persists everything needed to reproduce bands for new covariates:
grid, regressor coefficients, modulation samples, calibrated radius and
closure, level and mode. Floats survive the JSON round trip exactly (they
are written with Python's shortest exact representation).
"""

from __future__ import annotations

import json

import numpy as np

from .conformal import BandPredictor
from .core import ComponentGrid, Grid, MFConformalError
from .modulate import ModulationSet
from .regress import FittedRegressor, RegressorSpec

__all__ = ["FORMAT_VERSION", "BundleFormatError", "save_bundle", "load_bundle"]

FORMAT_VERSION = 1


class BundleFormatError(MFConformalError, ValueError):
    """The bundle file cannot be interpreted."""


def _grid_to_doc(grid: Grid) -> dict:
    return {
        "components": [
            {"points": c.points.tolist(), "weights": c.weights.tolist()}
            for c in grid.components
        ]
    }


def _grid_from_doc(doc: dict) -> Grid:
    comps = tuple(
        ComponentGrid(np.array(c["points"]), np.array(c["weights"]))
        for c in doc["components"]
    )
    return Grid(comps)


def predictor_to_doc(pred: BandPredictor, metadata: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "grid": _grid_to_doc(pred.model.grid),
        "regressor": {
            "kind": pred.model.spec.kind,
            "intercept": pred.model.spec.intercept,
            "terms": [list(t) for t in pred.model.spec.terms],
            "coefficients": [c.tolist() for c in pred.model.coefficients],
        },
        "modulation": {
            "label": pred.modulation.label,
            "fns": [f.tolist() for f in pred.modulation.fns],
            "unit_integral": pred.modulation.unit_integral,
        },
        "radius": None if pred.infinite else pred.radius,
        "closure": pred.closure,
        "infinite": pred.infinite,
        "alpha": pred.alpha,
        "mode": pred.mode,
        "tau": pred.tau,
        "metadata": metadata or {},
    }


def predictor_from_doc(doc: dict) -> tuple[BandPredictor, dict]:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleFormatError(
            f"bundle format version {version!r} not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    try:
        grid = _grid_from_doc(doc["grid"])
        reg = doc["regressor"]
        spec = RegressorSpec(
            kind=reg["kind"],
            terms=tuple(tuple(t) for t in reg["terms"]),
            intercept=reg["intercept"],
        )
        model = FittedRegressor(
            grid=grid,
            spec=spec,
            coefficients=tuple(np.array(c) for c in reg["coefficients"]),
        )
        mod = doc["modulation"]
        s = ModulationSet(
            grid=grid,
            fns=tuple(np.array(f) for f in mod["fns"]),
            label=mod["label"],
            unit_integral=bool(mod.get("unit_integral", False)),
        )
        infinite = bool(doc["infinite"])
        pred = BandPredictor(
            model=model,
            modulation=s,
            radius=float("nan") if infinite else float(doc["radius"]),
            closure=doc["closure"],
            alpha=float(doc["alpha"]),
            mode=doc["mode"],
            tau=None if doc.get("tau") is None else float(doc["tau"]),
            infinite=infinite,
        )
    except BundleFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleFormatError(f"malformed bundle: {exc}") from exc
    return pred, dict(doc.get("metadata", {}))


def save_bundle(path, pred: BandPredictor, metadata: dict | None = None) -> None:
    doc = predictor_to_doc(pred, metadata)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(path) -> tuple[BandPredictor, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BundleFormatError(f"bundle is not valid JSON: {exc}") from exc
    return predictor_from_doc(doc)
