"""Closed-form Fisher information and Wald confidence intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.stats import norm

from .core import IndepParams, SingularFisher, Window

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class FisherMatrix:
    order: tuple
    entries: np.ndarray

    def __getitem__(self, key: tuple) -> float:
        i, j = (self.order.index(k) for k in key)
        return float(self.entries[i, j])

    def submatrix(self, names: Sequence[str]) -> "FisherMatrix":
        idx = [self.order.index(n) for n in names]
        return FisherMatrix(tuple(names), self.entries[np.ix_(idx, idx)].copy())

    def is_psd(self) -> bool:
        eig = np.linalg.eigvalsh(self.entries)
        return bool(np.all(eig >= -1e-10 * abs(np.trace(self.entries))))


@dataclass(frozen=True)
class ConfidenceIntervals:
    """Wald intervals keyed by parameter name.

    ``intervals`` holds raw ``(lower, upper)`` pairs; truncation at zero
    for positive parameters is a presentation choice left to the caller.
    """

    level: float
    estimates: dict
    std_errors: dict
    intervals: dict


def fisher_independence_arrays(alpha: float, beta: float, gamma: float,
                               offsets) -> np.ndarray:
    """3x3 expected information in ``(alpha, beta, gamma)`` order."""
    t = np.abs(np.asarray(offsets, dtype=float))
    base = alpha * t + 1.0
    log_base = np.log(base)
    decay = base ** -beta
    i_aa = gamma * beta ** 2 * np.sum(t ** 2 * decay / base ** 2)
    i_ab = beta * gamma * np.sum(log_base * t * decay / base)
    i_bb = gamma * np.sum(log_base ** 2 * decay)
    i_ag = -beta * np.sum(t * decay / base)
    i_bg = -np.sum(log_base * decay)
    i_gg = np.sum(decay) / gamma
    return np.array([[i_aa, i_ab, i_ag],
                     [i_ab, i_bb, i_bg],
                     [i_ag, i_bg, i_gg]])


def fisher_independence(params: IndepParams, window: Window) -> FisherMatrix:
    entries = fisher_independence_arrays(params.alpha, params.beta, params.gamma,
                                         window.offsets)
    return FisherMatrix(("alpha", "beta", "gamma"), entries)


def fisher_ar1(alpha: float, beta: float, y0: float, horizon: int) -> FisherMatrix:
    """2x2 conditional information of the AR(1) model given ``y0``.

    Each term uses the marginal mean ``y0 / (t*alpha + 1)**beta`` of the
    lagged count, so every entry is proportional to ``y0``.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    t = np.arange(1, horizon + 1, dtype=float)
    prev = (t - 1.0) * alpha + 1.0
    cur = t * alpha + 1.0
    log_ratio = np.log(prev / cur)
    i_aa = beta ** 2 * y0 * np.sum(prev ** -2 / cur ** (beta + 2))
    i_ab = -beta * y0 * np.sum(prev ** -1 * cur ** -(beta + 1) * log_ratio)
    i_bb = y0 * np.sum(cur ** -beta * log_ratio ** 2)
    return FisherMatrix(("alpha", "beta"), np.array([[i_aa, i_ab], [i_ab, i_bb]]))


def invert_fisher(fisher: FisherMatrix) -> np.ndarray:
    entries = np.asarray(fisher.entries, dtype=float)
    if not np.all(np.isfinite(entries)):
        raise SingularFisher("Fisher matrix has non-finite entries")
    cond = np.linalg.cond(entries)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularFisher(f"Fisher matrix condition number {cond:.3g} too large")
    n = entries.shape[0]
    return scipy.linalg.solve(entries, np.eye(n), assume_a="sym")


def confidence_intervals(estimates, fisher: FisherMatrix,
                         level: float = 0.95) -> ConfidenceIntervals:
    """Wald intervals ``estimate ± z * sqrt(diag(I^-1))``.

    ``estimates`` is a sequence in ``fisher.order`` or a mapping by name.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if isinstance(estimates, dict):
        est = [float(estimates[n]) for n in fisher.order]
    else:
        est = [float(x) for x in estimates]
    if len(est) != len(fisher.order):
        raise ValueError("estimates and Fisher matrix differ in size")
    cov = invert_fisher(fisher)
    z = norm.ppf((1.0 + level) / 2.0)
    se = np.sqrt(np.diag(cov))
    names = fisher.order
    return ConfidenceIntervals(
        level=level,
        estimates=dict(zip(names, est)),
        std_errors={n: float(s) for n, s in zip(names, se)},
        intervals={n: (e - z * s, e + z * s) for n, e, s in zip(names, est, se)},
    )


def fisher_series_divergence_report(params: IndepParams,
                                    max_half_window: int) -> list[tuple[int, float]]:
    """``I_alpha_alpha`` over symmetric windows ``[-T, T]``, ``T = 0..max_half_window``.

    The sequence saturates when ``beta > 1`` and grows without bound when
    ``beta <= 1``.
    """
    t = np.arange(0, max_half_window + 1, dtype=float)
    base = params.alpha * t + 1.0
    terms = params.gamma * params.beta ** 2 * t ** 2 * base ** -(params.beta + 2.0)
    # both sides of t0 contribute except the centre
    terms[1:] *= 2.0
    totals = np.cumsum(terms)
    return [(int(k), float(v)) for k, v in zip(t, totals)]
