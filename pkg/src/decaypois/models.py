"""Mean functions of the independence, AR(1)/AR(2) and unified models.

Scalar functions mirror the model equations one step at a time. The
``*_path_means`` functions compute every conditional mean of an observed
path at once (numpy, broadcasting over leading axes) and are what the
likelihoods use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (Ar2Params, IndepParams, LagExceedsIndex, UnifiedParams,
                   Window, ZeroBaseFractionalPower)

#: Lagged counts below this value are replaced by it in conditional means.
DEFAULT_FLOOR = 0.5


@dataclass(frozen=True)
class MeanCurve:
    offsets: tuple
    means: tuple


def power_decay_mean(params: IndepParams, t_offset: int) -> float:
    """``gamma / (alpha*|t - t0| + 1)**beta``."""
    return params.gamma / (params.alpha * abs(t_offset) + 1.0) ** params.beta


def ar_decay_factor(alpha: float, beta: float, m: int, lag: int) -> float:
    """Shrinkage ``(((m-lag)*alpha + 1) / (m*alpha + 1))**beta`` of a lagged count."""
    if lag not in (1, 2):
        raise ValueError("lag must be 1 or 2")
    if m < lag:
        raise LagExceedsIndex(f"m={m} < lag={lag}")
    return (((m - lag) * alpha + 1.0) / (m * alpha + 1.0)) ** beta


def _floored(y: float, floor: float) -> float:
    return max(float(y), floor)


def ar1_first_step_mean(params: Ar2Params, y_t0: float,
                        floor: float = DEFAULT_FLOOR) -> float:
    return _floored(y_t0, floor) / (params.alpha + 1.0) ** params.beta


def ar2_conditional_mean(params: Ar2Params, y_prev1: float, y_prev2: float, m: int,
                         floor: float = DEFAULT_FLOOR) -> float:
    if m < 2:
        raise LagExceedsIndex(f"AR(2) mean needs m >= 2, got {m}")
    a, b, s = params.alpha, params.beta, params.s
    # grouping matches unified_conditional_mean so u=v=0 reproduces this bit for bit
    return (s * (_floored(y_prev1, floor) * ar_decay_factor(a, b, m, 1))
            + (1.0 - s) * (_floored(y_prev2, floor) * ar_decay_factor(a, b, m, 2)))


def _geometric_mix(anchor: float, lagged: float, weight: float) -> float:
    # anchor**weight * lagged**(1 - weight); a zero base with a fractional
    # exponent has no usable limit for the likelihood
    if (lagged == 0.0 and 0.0 < 1.0 - weight < 1.0) or (anchor == 0.0 and 0.0 < weight < 1.0):
        raise ZeroBaseFractionalPower("zero lagged count under fractional power")
    return anchor ** weight * lagged ** (1.0 - weight)


def unified_conditional_mean(params: UnifiedParams, y_t0: float, y_prev1: float,
                             y_prev2: float, m: int,
                             floor: float = DEFAULT_FLOOR) -> float:
    if m < 2:
        raise LagExceedsIndex(f"unified mean needs m >= 2, got {m}")
    a, b = params.alpha, params.beta
    y0 = _floored(y_t0, floor)
    lag1 = _floored(y_prev1, floor)
    lag2 = _floored(y_prev2, floor)
    term1 = (_geometric_mix(y0 / ((m - 1) * a + 1.0) ** b, lag1, params.u)
             * ar_decay_factor(a, b, m, 1))
    term2 = (_geometric_mix(y0 / ((m - 2) * a + 1.0) ** b, lag2, params.v)
             * ar_decay_factor(a, b, m, 2))
    return params.w * term1 + (1.0 - params.w) * term2


def fitted_curve_independence(params: IndepParams, window: Window) -> MeanCurve:
    offsets = tuple(range(window.lo, window.hi + 1))
    return MeanCurve(offsets, tuple(power_decay_mean(params, t) for t in offsets))


def power_decay_means(alpha: float, beta: float, gamma: float, offsets) -> np.ndarray:
    return gamma / (alpha * np.abs(np.asarray(offsets, dtype=float)) + 1.0) ** beta


def _path_factors(alpha: float, beta: float, horizon: int):
    m = np.arange(1, horizon + 1, dtype=float)
    denom = m * alpha + 1.0
    lag1 = (((m - 1.0) * alpha + 1.0) / denom) ** beta
    # no lag-2 term at m = 1
    lag2 = np.ones_like(m)
    lag2[1:] = (((m[1:] - 2.0) * alpha + 1.0) / denom[1:]) ** beta
    return m, lag1, lag2


def ar_path_means(alpha: float, beta: float, s: float, path,
                  floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Conditional means of ``path[..., 1:]`` given ``path[..., 0] = y_t0``.

    Step 1 is the AR(1) form; steps ``m >= 2`` mix the decayed lag-1 and
    lag-2 counts with weight ``s``.
    """
    y = np.maximum(np.asarray(path, dtype=float), floor)
    horizon = y.shape[-1] - 1
    _, lag1, lag2 = _path_factors(alpha, beta, horizon)
    mu = np.empty(y.shape[:-1] + (horizon,))
    mu[..., 0] = y[..., 0] * lag1[0]
    if horizon > 1:
        mu[..., 1:] = (s * y[..., 1:-1] * lag1[1:]
                       + (1.0 - s) * y[..., :-2] * lag2[1:])
    return mu


def unified_path_means(alpha: float, beta: float, w: float, u: float, v: float,
                       path, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    y = np.maximum(np.asarray(path, dtype=float), floor)
    horizon = y.shape[-1] - 1
    m, lag1, lag2 = _path_factors(alpha, beta, horizon)
    y0 = y[..., :1]
    mu = np.empty(y.shape[:-1] + (horizon,))
    mu[..., 0] = y[..., 0] * lag1[0]
    if horizon > 1:
        mm = m[1:]
        anchor1 = y0 / ((mm - 1.0) * alpha + 1.0) ** beta
        anchor2 = y0 / ((mm - 2.0) * alpha + 1.0) ** beta
        term1 = anchor1 ** u * y[..., 1:-1] ** (1.0 - u) * lag1[1:]
        term2 = anchor2 ** v * y[..., :-2] ** (1.0 - v) * lag2[1:]
        mu[..., 1:] = w * term1 + (1.0 - w) * term2
    return mu
