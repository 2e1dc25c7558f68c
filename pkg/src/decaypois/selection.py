"""AIC and cross-model comparison of the conditional model family."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

from .core import DecayPoisError, EventSeries, UnifiedParams
from .inference import (FitOptions, FitResult, fit_ar1, fit_ar2, fit_independence,
                        fit_unified, fit_unified_family)

AIC_TIE_TOL = 1e-9


def aic(log_likelihood: float, n_params: int) -> float:
    """Akaike information criterion ``2k - 2 log L``."""
    if n_params < 1:
        raise ValueError("n_params must be at least 1")
    return 2.0 * n_params - 2.0 * log_likelihood


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    n_params: int
    fit: Optional[FitResult] = None
    error: Optional[str] = None
    comparable: bool = True
    note: str = ""

    @property
    def params(self):
        return None if self.fit is None else self.fit.params

    @property
    def log_likelihood(self) -> Optional[float]:
        return None if self.fit is None else self.fit.log_likelihood

    @property
    def aic(self) -> Optional[float]:
        return None if self.fit is None else aic(self.fit.log_likelihood, self.n_params)


@dataclass(frozen=True)
class ModelComparison:
    rows: tuple
    best: Optional[str]

    def row(self, model: str) -> ComparisonRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)


# model name -> (parameter count, description)
MODELS = {
    "ar1": (2, "AR(2) with s = 1"),
    "ar2": (3, "AR(2), s in [0, 1]"),
    "unified": (5, "unified model, w, u, v free"),
    "unified_w1": (3, "unified with w = 1, u free (v inert)"),
    "unified_w1_u1": (2, "unified with w = 1, u = 1: decay anchored at y_t0"),
    "unified_w1_u0": (2, "unified with w = 1, u = 0: identical to AR(1)"),
}


def _attempt(fn):
    try:
        return fn(), None
    except DecayPoisError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _as_unified(fit: FitResult, model: str, w: float, u: float, v: float) -> FitResult:
    p = fit.params
    return FitResult(model, UnifiedParams(p.alpha, p.beta, w, u, v), fit.log_likelihood,
                     MODELS[model][0], fit.converged, fit.n_evaluations, fit.window,
                     dict(fit.diagnostics))


def compare_models(series: EventSeries, horizon: int, options: FitOptions = FitOptions(),
                   include_independence: bool = False) -> ModelComparison:
    """Fit the conditional family on ``horizon`` post-event days and rank by AIC.

    Nested fits are reused: AR(1) seeds AR(2), AR(2) and the anchored curve
    seed the unified fits. A row whose fit fails carries the error text
    instead of aborting the comparison.
    """
    ar1, err_ar1 = _attempt(lambda: fit_ar1(series, horizon, options))
    ar2, err_ar2 = _attempt(lambda: fit_ar2(series, horizon, options, ar1_fit=ar1))
    w1u1, err_w1u1 = _attempt(lambda: fit_unified_family(
        series, horizon, options, fixed={"w": 1.0, "u": 1.0, "v": 1.0}, n_starts=1,
        model="unified_w1_u1"))
    unified, err_unified = _attempt(lambda: fit_unified(
        series, horizon, options, ar2_fit=ar2, anchored_fit=w1u1))

    def fit_w1():
        embedded = []
        if ar1 is not None:
            embedded.append({"alpha": ar1.params.alpha, "beta": ar1.params.beta,
                             "w": 1.0, "u": 0.0, "v": 1.0, "converged": ar1.converged})
        if w1u1 is not None:
            embedded.append({"alpha": w1u1.params.alpha, "beta": w1u1.params.beta,
                             "w": 1.0, "u": 1.0, "v": 1.0,
                             "converged": w1u1.converged})
        return fit_unified_family(series, horizon, options, fixed={"w": 1.0, "v": 1.0},
                                  embedded=tuple(embedded), model="unified_w1")
    w1, err_w1 = _attempt(fit_w1)

    w1u0 = None if ar1 is None else _as_unified(ar1, "unified_w1_u0", 1.0, 0.0, 1.0)

    rows = [
        ComparisonRow("ar1", 2, ar1, err_ar1),
        ComparisonRow("ar2", 3, ar2, err_ar2),
        ComparisonRow("unified", 5, unified, err_unified),
        ComparisonRow("unified_w1", 3, w1, err_w1),
        ComparisonRow("unified_w1_u1", 2, w1u1, err_w1u1),
        ComparisonRow("unified_w1_u0", 2, w1u0, err_ar1,
                      note="same model as ar1; fit reused"),
    ]
    if include_independence:
        warnings.warn("independence row uses the full-window likelihood and is not "
                      "AIC-comparable with the conditional models", stacklevel=2)
        indep, err = _attempt(lambda: fit_independence(series, series.full_window,
                                                       options))
        rows.append(ComparisonRow("independence", 3, indep, err, comparable=False,
                                  note="different conditioning; excluded from ranking"))
    return ModelComparison(tuple(rows), _best(rows))


def _best(rows) -> Optional[str]:
    ranked = [r for r in rows if r.fit is not None and r.comparable]
    if not ranked:
        return None
    lowest = min(r.aic for r in ranked)
    near = [r for r in ranked if r.aic <= lowest + AIC_TIE_TOL]
    # min() keeps the first of equal keys, so row order breaks remaining ties
    return min(near, key=lambda r: r.n_params).model
