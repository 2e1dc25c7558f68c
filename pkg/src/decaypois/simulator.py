"""Parametric simulation of event-centred count series.

Random streams
--------------
Replicate ``i`` of seed ``seed`` draws from
``Generator(Philox(SeedSequence(seed, spawn_key=(i,))))``, so replicates
are independent of generation order and can be produced in parallel.

Poisson variates use sequential-search inversion for means below 30 and
the PTRS transformed-rejection method (Hörmann, 1993) otherwise. Both
consume only ``Generator.random()`` doubles; the algorithm choice is part
of the reproducibility contract and must not change between releases.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import (Ar2Params, DecayPoisError, EventSeries, IndepParams,
                   UnifiedParams, Window)
from .models import (DEFAULT_FLOOR, ar1_first_step_mean, ar2_conditional_mean,
                     power_decay_mean, unified_conditional_mean)

INVERSION_CUTOFF = 30.0
_SEED_MASK = (1 << 64) - 1


class InvalidConfig(DecayPoisError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """What to simulate.

    ``y_t0`` is the fixed starting count of the conditional models and is
    ignored by the independence model, whose peak comes from
    ``params.gamma``. ``window`` is used by the independence model,
    ``horizon`` by the others.
    """

    model: str
    params: Union[IndepParams, Ar2Params, UnifiedParams]
    y_t0: Optional[int] = None
    window: Optional[Window] = None
    horizon: Optional[int] = None
    rng_seed: int = 0
    n_replicates: int = 1
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        expected = {"independence": IndepParams, "ar1": Ar2Params, "ar2": Ar2Params,
                    "unified": UnifiedParams}
        if self.model not in expected:
            raise InvalidConfig(f"unknown model {self.model!r}")
        if not isinstance(self.params, expected[self.model]):
            raise InvalidConfig(
                f"model {self.model!r} needs {expected[self.model].__name__}")
        if self.n_replicates < 1:
            raise InvalidConfig("n_replicates must be at least 1")
        if self.model == "independence":
            if self.window is None or not self.window.lo <= 0 <= self.window.hi:
                raise InvalidConfig("independence simulation needs a window containing 0")
        else:
            if self.horizon is None or self.horizon < 1:
                raise InvalidConfig("conditional simulation needs horizon >= 1")
            if self.y_t0 is None or self.y_t0 < 0:
                raise InvalidConfig("conditional simulation needs y_t0 >= 0")


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def poisson_variate(rng: np.random.Generator, mu: float) -> int:
    if mu < 0 or not math.isfinite(mu):
        raise ValueError(f"invalid Poisson mean {mu!r}")
    if mu == 0:
        return 0
    if mu < INVERSION_CUTOFF:
        return _poisson_inversion(rng, mu)
    return _poisson_ptrs(rng, mu)


def _poisson_inversion(rng, mu):
    u = rng.random()
    k = 0
    p = math.exp(-mu)
    cdf = p
    # the cutoff bounds the tail the loop can reach in double precision
    while u > cdf and k < 1000:
        k += 1
        p *= mu / k
        cdf += p
    return k


def _poisson_ptrs(rng, mu):
    log_mu = math.log(mu)
    smu = math.sqrt(mu)
    b = 0.931 + 2.53 * smu
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= -mu + k * log_mu - math.lgamma(k + 1)):
            return int(k)


def _labels(offsets) -> tuple:
    return tuple(str(int(t)) for t in offsets)


def simulate_independence(config: SimConfig) -> list[EventSeries]:
    if config.model != "independence":
        raise InvalidConfig("simulate_independence needs model='independence'")
    offsets = list(range(config.window.lo, config.window.hi + 1))
    means = [power_decay_mean(config.params, t) for t in offsets]
    out = []
    for i in range(config.n_replicates):
        rng = replicate_rng(config.rng_seed, i)
        counts = tuple(poisson_variate(rng, mu) for mu in means)
        out.append(EventSeries(counts, -config.window.lo, _labels(offsets)))
    return out


def _simulate_conditional(config: SimConfig, step_mean) -> list[EventSeries]:
    p = config.params
    out = []
    for i in range(config.n_replicates):
        rng = replicate_rng(config.rng_seed, i)
        y = [int(config.y_t0)]
        ar1 = Ar2Params(p.alpha, p.beta, 1.0)
        y.append(poisson_variate(rng, ar1_first_step_mean(ar1, y[0], config.floor)))
        for m in range(2, config.horizon + 1):
            y.append(poisson_variate(rng, step_mean(y, m)))
        out.append(EventSeries(tuple(y), 0, _labels(range(config.horizon + 1))))
    return out


def simulate_ar(config: SimConfig) -> list[EventSeries]:
    if config.model not in ("ar1", "ar2"):
        raise InvalidConfig("simulate_ar needs model 'ar1' or 'ar2'")
    p = config.params
    if config.model == "ar1":
        p = Ar2Params(p.alpha, p.beta, 1.0)
    return _simulate_conditional(
        config, lambda y, m: ar2_conditional_mean(p, y[m - 1], y[m - 2], m, config.floor))


def simulate_unified(config: SimConfig) -> list[EventSeries]:
    if config.model != "unified":
        raise InvalidConfig("simulate_unified needs model='unified'")
    p = config.params
    return _simulate_conditional(
        config,
        lambda y, m: unified_conditional_mean(p, y[0], y[m - 1], y[m - 2], m, config.floor))


def simulate(config: SimConfig) -> list[EventSeries]:
    if config.model == "independence":
        return simulate_independence(config)
    if config.model == "unified":
        return simulate_unified(config)
    return simulate_ar(config)


def write_series_csv(series: EventSeries, path: Union[str, Path]) -> None:
    """Write ``label,count`` rows in the format the CLI ingests."""
    labels = series.labels or _labels(np.arange(len(series.counts)) - series.t0_index)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "count"])
        for label, count in zip(labels, series.counts):
            writer.writerow([label, count])
