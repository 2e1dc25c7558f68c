"""Domain types, validation errors and event-window arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class DecayPoisError(ValueError):
    """Base class for every error raised by this package."""


class EmptySeries(DecayPoisError):
    pass


class NegativeCount(DecayPoisError):
    def __init__(self, index: int):
        super().__init__(f"negative count at index {index}")
        self.index = index


class T0OutOfRange(DecayPoisError):
    pass


class WindowOutOfRange(DecayPoisError):
    pass


class HorizonOutOfRange(DecayPoisError):
    pass


class LagExceedsIndex(DecayPoisError):
    pass


class NonPositiveMean(DecayPoisError):
    pass


class ZeroBaseFractionalPower(DecayPoisError):
    pass


class InvalidParameter(DecayPoisError):
    pass


class TooFewPoints(DecayPoisError):
    pass


class NonConvergence(DecayPoisError):
    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class SingularFisher(DecayPoisError):
    pass


@dataclass(frozen=True)
class Window:
    """Inclusive offset range ``[lo, hi]`` relative to the event day."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise WindowOutOfRange(f"window lo={self.lo} exceeds hi={self.hi}")

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def __len__(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class EventSeries:
    """Daily, gap-free count series with the event day at ``t0_index``."""

    counts: tuple
    t0_index: int
    labels: Optional[tuple] = None

    @property
    def n_before(self) -> int:
        return self.t0_index

    @property
    def n_after(self) -> int:
        return len(self.counts) - 1 - self.t0_index

    @property
    def peak_count(self) -> int:
        return self.counts[self.t0_index]

    @property
    def full_window(self) -> Window:
        return Window(-self.n_before, self.n_after)

    def window_arrays(self, window: Window) -> tuple[np.ndarray, np.ndarray]:
        """Offsets and counts inside ``window`` as numpy arrays."""
        _check_window(self, window)
        start = self.t0_index + window.lo
        counts = np.asarray(self.counts[start:start + len(window)], dtype=np.int64)
        return window.offsets, counts

    def after_path(self, horizon: int) -> np.ndarray:
        """Counts ``y_t0, y_t0+1, ..., y_t0+horizon``."""
        if horizon < 0 or horizon > self.n_after:
            raise HorizonOutOfRange(
                f"horizon {horizon} needs {horizon} points after t0, "
                f"series has {self.n_after}")
        return np.asarray(
            self.counts[self.t0_index:self.t0_index + horizon + 1], dtype=np.int64)


def _check_param(name: str, value: float, lo: float = 0.0, hi: float = math.inf):
    if not math.isfinite(value) or value < lo or value > hi:
        raise InvalidParameter(f"{name}={value!r} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class IndepParams:
    """Power-law decay parameters: steepness, decay exponent, peak level.

    ``alpha == 0`` or ``beta == 0`` is accepted for evaluation only; the
    fitters always return interior values.
    """

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        _check_param("alpha", self.alpha)
        _check_param("beta", self.beta)
        _check_param("gamma", self.gamma)
        if self.gamma <= 0:
            raise InvalidParameter("gamma must be positive")

    def as_tuple(self) -> tuple:
        return (self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class Ar2Params:
    alpha: float
    beta: float
    s: float = 1.0

    def __post_init__(self):
        _check_param("alpha", self.alpha)
        _check_param("beta", self.beta)
        _check_param("s", self.s, 0.0, 1.0)

    def as_tuple(self) -> tuple:
        return (self.alpha, self.beta, self.s)


@dataclass(frozen=True)
class UnifiedParams:
    alpha: float
    beta: float
    w: float
    u: float
    v: float

    def __post_init__(self):
        _check_param("alpha", self.alpha)
        _check_param("beta", self.beta)
        for name in ("w", "u", "v"):
            _check_param(name, getattr(self, name), 0.0, 1.0)

    def as_tuple(self) -> tuple:
        return (self.alpha, self.beta, self.w, self.u, self.v)


def validate_series(raw_counts: Sequence[int], t0_index: int,
                    labels: Optional[Sequence[str]] = None) -> EventSeries:
    """Check raw counts and the event index, returning an :class:`EventSeries`."""
    counts = tuple(int(c) for c in raw_counts)
    if not counts:
        raise EmptySeries("series has no points")
    for i, c in enumerate(counts):
        if c < 0:
            raise NegativeCount(i)
    if not 0 <= t0_index < len(counts):
        raise T0OutOfRange(f"t0_index {t0_index} outside [0, {len(counts) - 1}]")
    if labels is not None:
        labels = tuple(str(x) for x in labels)
        if len(labels) != len(counts):
            raise DecayPoisError("labels and counts differ in length")
    return EventSeries(counts, int(t0_index), labels)


def _check_window(series: EventSeries, window: Window):
    if window.lo < -series.n_before or window.hi > series.n_after:
        raise WindowOutOfRange(
            f"window [{window.lo}, {window.hi}] not inside "
            f"[{-series.n_before}, {series.n_after}]")


def relative_window_slice(series: EventSeries, window: Window) -> list[tuple[int, int]]:
    """``(t - t0, y_t)`` pairs for every day in ``window``, ascending."""
    offsets, counts = series.window_arrays(window)
    return [(int(t), int(y)) for t, y in zip(offsets, counts)]
