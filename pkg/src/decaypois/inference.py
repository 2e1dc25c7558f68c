"""Log-likelihoods and constrained maximum-likelihood fits.

Positive parameters are optimised on the log scale and ``[0, 1]`` weights
on the logit scale. The independence model uses BFGS with its analytic
score followed by Fisher-scoring polish; the conditional models use
Nelder-Mead with restarts. A logit weight beyond ``BOUNDARY_LOGIT`` is
snapped onto the boundary and the remaining parameters re-optimised there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logit

from .core import (Ar2Params, DecayPoisError, EventSeries, IndepParams,
                   NonConvergence, NonPositiveMean, TooFewPoints, UnifiedParams,
                   Window)
from .models import (DEFAULT_FLOOR, ar_path_means, power_decay_means,
                     unified_path_means)
from .uncertainty import fisher_independence_arrays

BOUNDARY_LOGIT = 8.0
TIE_TOL = 1e-9
_BAD = 1e300


@dataclass(frozen=True)
class FitOptions:
    grad_tol: float = 1e-8
    x_tol: float = 1e-9
    max_evals: int = 10_000
    n_starts: int = 8
    rng_seed: int = 0
    zero_floor: float = DEFAULT_FLOOR
    strict: bool = False


@dataclass(frozen=True)
class FitResult:
    """Outcome of one maximum-likelihood fit.

    ``window`` is the offset range the likelihood covered; for the
    conditional models it is ``Window(1, horizon)``. ``diagnostics`` holds
    model-specific extras (gradient norm, multi-start spread, boundary
    flags).
    """

    model: str
    params: object
    log_likelihood: float
    n_params: int
    converged: bool
    n_evaluations: int
    window: Window
    diagnostics: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class AsymmetricFit:
    before: FitResult
    after: FitResult
    gamma_shared: float


# --------------------------------------------------------------------------
# likelihoods

def poisson_log_pmf(y: int, mu: float) -> float:
    if not mu > 0:
        raise NonPositiveMean(f"Poisson mean must be positive, got {mu!r}")
    return y * math.log(mu) - mu - float(gammaln(y + 1))


def _log_pmf_terms(y, mu, include_constant: bool = True):
    y = np.asarray(y, dtype=float)
    out = y * np.log(mu) - mu
    if include_constant:
        out = out - gammaln(y + 1.0)
    return out


def indep_loglik_array(alpha, beta, gamma, offsets, counts,
                       include_constant: bool = True):
    """Independence log-likelihood, summed over the last axis of ``counts``."""
    mu = power_decay_means(alpha, beta, gamma, offsets)
    return _log_pmf_terms(counts, mu, include_constant).sum(axis=-1)


def ar_loglik_array(alpha, beta, s, paths, floor: float = DEFAULT_FLOOR,
                    include_constant: bool = True):
    """Conditional AR(2) log-likelihood of ``paths[..., 1:]`` given ``paths[..., 0]``."""
    paths = np.asarray(paths)
    mu = ar_path_means(alpha, beta, s, paths, floor)
    return _log_pmf_terms(paths[..., 1:], mu, include_constant).sum(axis=-1)


def unified_loglik_array(alpha, beta, w, u, v, paths, floor: float = DEFAULT_FLOOR,
                         include_constant: bool = True):
    paths = np.asarray(paths)
    mu = unified_path_means(alpha, beta, w, u, v, paths, floor)
    return _log_pmf_terms(paths[..., 1:], mu, include_constant).sum(axis=-1)


def loglik_independence(params: IndepParams, series: EventSeries, window: Window) -> float:
    offsets, counts = series.window_arrays(window)
    return float(indep_loglik_array(*params.as_tuple(), offsets, counts))


def score_independence(params: IndepParams, series: EventSeries,
                       window: Window) -> tuple[float, float, float]:
    """Analytic gradient ``(dl/dalpha, dl/dbeta, dl/dgamma)``."""
    offsets, counts = series.window_arrays(window)
    return _indep_score(params.alpha, params.beta, params.gamma, offsets, counts)


def _indep_score(alpha, beta, gamma, offsets, counts):
    t = np.abs(offsets).astype(float)
    y = counts.astype(float)
    base = alpha * t + 1.0
    log_base = np.log(base)
    decay = base ** -beta
    d_alpha = -beta * np.sum(y * t / base) + gamma * beta * np.sum(t * decay / base)
    d_beta = -np.sum(y * log_base) + gamma * np.sum(log_base * decay)
    d_gamma = y.sum() / gamma - decay.sum()
    return float(d_alpha), float(d_beta), float(d_gamma)


def loglik_ar2(params: Ar2Params, series: EventSeries, horizon: int,
               floor: float = DEFAULT_FLOOR) -> float:
    if horizon < 1:
        raise TooFewPoints("horizon must be at least 1")
    path = series.after_path(horizon)
    return float(ar_loglik_array(*params.as_tuple(), path, floor))


def loglik_unified(params: UnifiedParams, series: EventSeries, horizon: int,
                   floor: float = DEFAULT_FLOOR) -> float:
    if horizon < 1:
        raise TooFewPoints("horizon must be at least 1")
    path = series.after_path(horizon)
    return float(unified_loglik_array(*params.as_tuple(), path, floor))


# --------------------------------------------------------------------------
# independence fits

def fit_independence(series: EventSeries, window: Window,
                     options: FitOptions = FitOptions(),
                     gamma: Optional[float] = None) -> FitResult:
    """Maximum-likelihood fit of the power-law decay independence model.

    Passing ``gamma`` holds the peak level fixed and fits only alpha and
    beta (the after-event stage of :func:`fit_asymmetric`).
    """
    offsets, counts = series.window_arrays(window)
    fixed_gamma = gamma is not None
    n_free = 2 if fixed_gamma else 3
    informative = int(np.count_nonzero(offsets)) if fixed_gamma else len(offsets)
    if informative < n_free:
        raise TooFewPoints(
            f"window [{window.lo}, {window.hi}] has {informative} usable points "
            f"for {n_free} free parameters")
    if counts.sum() == 0:
        raise TooFewPoints("window contains only zero counts")

    const = float(gammaln(counts + 1.0).sum())
    scale = max(1.0, float(counts.sum()))
    gtol = options.grad_tol * scale

    if fixed_gamma:
        gamma = float(gamma)

        def unpack(theta):
            return math.exp(theta[0]), math.exp(theta[1]), gamma
        theta0 = np.array([0.0, 0.0])
    else:
        if 0 in offsets:
            gamma0 = float(counts[offsets == 0][0])
        else:
            gamma0 = float(counts.max())
        theta0 = np.array([0.0, 0.0, math.log(max(gamma0, 0.5))])

        def unpack(theta):
            return math.exp(theta[0]), math.exp(theta[1]), math.exp(theta[2])

    n_eval = 0

    def negll_and_grad(theta):
        nonlocal n_eval
        n_eval += 1
        if np.any(np.abs(theta) > 50):
            return _BAD, np.zeros_like(theta)
        a, b, g = unpack(theta)
        ll = float(indep_loglik_array(a, b, g, offsets, counts, include_constant=False))
        grad = _theta_score(a, b, g, offsets, counts, fixed_gamma)
        if not math.isfinite(ll) or not np.all(np.isfinite(grad)):
            return _BAD, np.zeros_like(theta)
        return -ll, -grad

    res = minimize(negll_and_grad, theta0, jac=True, method="BFGS",
                   options={"gtol": gtol, "maxiter": options.max_evals})
    theta = np.asarray(res.x, dtype=float)
    theta = _fisher_scoring_polish(theta, unpack, offsets, fixed_gamma, gtol,
                                   negll_and_grad)
    a, b, g = unpack(theta)
    grad = _theta_score(a, b, g, offsets, counts, fixed_gamma)
    grad_norm = float(np.max(np.abs(grad)))
    ll = float(indep_loglik_array(a, b, g, offsets, counts, include_constant=False)) - const
    converged = bool(grad_norm <= gtol) and n_eval <= options.max_evals
    result = FitResult(
        model="independence_after" if fixed_gamma else "independence",
        params=IndepParams(a, b, g),
        log_likelihood=ll,
        n_params=n_free,
        converged=converged,
        n_evaluations=n_eval,
        window=window,
        diagnostics={"grad_norm": grad_norm, "grad_tol": gtol,
                     "gamma_fixed": fixed_gamma},
    )
    return _check_strict(result, options)


def _theta_score(a, b, g, offsets, counts, fixed_gamma):
    # chain rule onto log-parameters
    da, db, dg = _indep_score(a, b, g, offsets, counts)
    if fixed_gamma:
        return np.array([a * da, b * db])
    return np.array([a * da, b * db, g * dg])


def _fisher_scoring_polish(theta, unpack, offsets, fixed_gamma, gtol,
                           negll_and_grad, max_iter: int = 50):
    f, grad = negll_and_grad(theta)
    for _ in range(max_iter):
        if f >= _BAD or np.max(np.abs(grad)) <= gtol:
            break
        a, b, g = unpack(theta)
        info = fisher_independence_arrays(a, b, g, offsets)
        jac = np.array([a, b, g])
        info = info * np.outer(jac, jac)
        if fixed_gamma:
            info = info[:2, :2]
        try:
            step = np.linalg.solve(info, -grad)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(30):
            cand = theta + lam * step
            f_new, g_new = negll_and_grad(cand)
            if f_new <= f:
                break
            lam *= 0.5
        else:
            break
        if f_new == f and np.array_equal(cand, theta):
            break
        theta, f, grad = cand, f_new, g_new
    return theta


def fit_asymmetric(series: EventSeries, before_days: int = 7,
                   after_days: Optional[int] = None,
                   options: FitOptions = FitOptions()) -> AsymmetricFit:
    """Before/after fit sharing the peak level.

    Stage one fits alpha, beta and gamma on ``[-before_days, 0]``; stage
    two keeps that gamma and fits alpha, beta on ``[0, after_days]``.
    """
    if after_days is None:
        after_days = series.n_after
    before = fit_independence(series, Window(-before_days, 0), options)
    gamma_shared = before.params.gamma
    after = fit_independence(series, Window(0, after_days), options, gamma=gamma_shared)
    return AsymmetricFit(before=before, after=after, gamma_shared=gamma_shared)


# --------------------------------------------------------------------------
# conditional models

def _to_z(kind: str, x: float) -> float:
    if kind == "pos":
        return math.log(x)
    return float(logit(min(max(x, 1e-4), 1 - 1e-4)))


def _from_z(kind: str, z: float) -> float:
    if kind == "pos":
        return math.exp(min(max(z, -50.0), 50.0))
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass
class _Candidate:
    values: dict
    log_likelihood: float
    n_evaluations: int
    converged: bool
    boundary: tuple = ()


def _nelder_mead(f: Callable, z0, options: FitOptions, max_restarts: int = 4):
    z = np.asarray(z0, dtype=float)
    best = f(z)
    nfev = 1
    ok = False
    for _ in range(max_restarts):
        simplex = np.vstack([z] + [z + 0.5 * e for e in np.eye(len(z))])
        budget = max(options.max_evals - nfev, 10)
        res = minimize(f, z, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": options.x_tol,
                                "fatol": 1e-10, "maxfev": budget})
        nfev += res.nfev
        improvement = best - res.fun
        if res.fun <= best:
            z, best = np.asarray(res.x, dtype=float), float(res.fun)
        ok = bool(res.success)
        if improvement < 1e-10 or nfev >= options.max_evals:
            break
    return z, best, nfev, ok and nfev <= options.max_evals


def _fit_box(loglik: Callable[[dict], float], kinds: dict, start: dict, fixed: dict,
             options: FitOptions, inert: Optional[dict] = None) -> _Candidate:
    """Nelder-Mead over the non-fixed parameters, snapping weights to boundaries.

    ``inert`` maps ``(name, boundary value)`` to a parameter that has no
    effect once ``name`` sits on that boundary; it is pinned at its current
    value so the simplex does not wander along a flat direction.
    """
    inert = inert or {}
    free = [n for n in kinds if n not in fixed]
    if not free:
        vals = dict(fixed)
        return _Candidate(vals, loglik(vals), 1, True, tuple(sorted(fixed)))

    def unpack(z):
        vals = dict(fixed)
        vals.update({n: _from_z(kinds[n], zi) for n, zi in zip(free, z)})
        return vals

    def negll(z):
        try:
            ll = loglik(unpack(z))
        except DecayPoisError:
            return _BAD
        return -ll if math.isfinite(ll) else _BAD

    z0 = [_to_z(kinds[n], start[n]) for n in free]
    z, fval, nfev, ok = _nelder_mead(negll, z0, options)
    cand = _Candidate(unpack(z), -fval, nfev, ok)
    snap = {n: (1.0 if zi > 0 else 0.0) for n, zi in zip(free, z)
            if kinds[n] == "unit" and abs(zi) > BOUNDARY_LOGIT}
    if snap:
        pinned = {**fixed, **snap}
        for key, value in snap.items():
            other = inert.get((key, value))
            if other is not None and other not in pinned:
                pinned[other] = cand.values[other]
        sub = _fit_box(loglik, kinds, cand.values, pinned, options, inert)
        sub.n_evaluations += nfev
        if sub.log_likelihood >= cand.log_likelihood - TIE_TOL:
            sub.boundary = tuple(sorted(snap))
            return sub
        cand.n_evaluations = sub.n_evaluations
    return cand


def _select(cands: list, order: tuple) -> _Candidate:
    top = max(c.log_likelihood for c in cands)
    near = [c for c in cands if c.log_likelihood >= top - TIE_TOL]
    return min(near, key=lambda c: tuple(c.values[n] for n in order))


def _check_strict(result: FitResult, options: FitOptions) -> FitResult:
    if options.strict and not result.converged:
        raise NonConvergence(f"{result.model} fit did not converge", result)
    return result


_AR_KINDS = {"alpha": "pos", "beta": "pos", "s": "unit"}
_UNIFIED_KINDS = {"alpha": "pos", "beta": "pos", "w": "unit", "u": "unit", "v": "unit"}
_UNIFIED_ORDER = ("alpha", "beta", "w", "u", "v")
# w = 1 switches off the lag-2 term (and v with it); w = 0 the lag-1 term
_UNIFIED_INERT = {("w", 1.0): "v", ("w", 0.0): "u"}


def _ar_objective(path, floor):
    # log-space evaluation with the lag logs hoisted out of the optimiser loop;
    # agrees with ar_loglik_array to rounding
    y1 = float(path[1])
    y = path[2:].astype(float)
    lag = np.maximum(path.astype(float), floor)
    lag0, lag1, lag2 = float(lag[0]), lag[1:-1], lag[:-2]
    k = np.arange(len(path), dtype=float)
    const = float(gammaln(path[1:] + 1.0).sum())

    def loglik(p):
        a, b, s = p["alpha"], p["beta"], p["s"]
        log_k = np.log(k * a + 1.0)
        log_m = log_k[2:]
        mu = (s * lag1 * np.exp(b * (log_k[1:-1] - log_m))
              + (1.0 - s) * lag2 * np.exp(b * (log_k[:-2] - log_m)))
        log_mu1 = math.log(lag0) - b * log_k[1]
        return (y1 * log_mu1 - math.exp(log_mu1)
                + float(y @ np.log(mu)) - float(mu.sum()) - const)
    return loglik


def fit_ar1(series: EventSeries, horizon: int,
            options: FitOptions = FitOptions()) -> FitResult:
    """AR(1) conditional fit: the AR(2) likelihood with ``s`` pinned to 1."""
    if horizon < 2:
        raise TooFewPoints("AR(1) fit needs horizon >= 2")
    path = series.after_path(horizon)
    loglik = _ar_objective(path, options.zero_floor)
    cand = _fit_box(loglik, _AR_KINDS, {"alpha": 1.0, "beta": 1.0}, {"s": 1.0}, options)
    result = FitResult("ar1", Ar2Params(cand.values["alpha"], cand.values["beta"], 1.0),
                       cand.log_likelihood, 2, cand.converged, cand.n_evaluations,
                       Window(1, horizon))
    return _check_strict(result, options)


def fit_ar2(series: EventSeries, horizon: int, options: FitOptions = FitOptions(),
            ar1_fit: Optional[FitResult] = None) -> FitResult:
    """AR(2) conditional fit with ``s`` restricted to ``[0, 1]``.

    The ``s = 1`` face (the AR(1) fit) is always a candidate, so the result
    never has a lower likelihood than :func:`fit_ar1`.
    """
    if horizon < 3:
        raise TooFewPoints("AR(2) fit needs horizon >= 3")
    path = series.after_path(horizon)
    loglik = _ar_objective(path, options.zero_floor)
    interior = _fit_box(loglik, _AR_KINDS, {"alpha": 1.0, "beta": 1.0, "s": 0.8}, {},
                        options)
    if ar1_fit is None:
        ar1_fit = fit_ar1(series, horizon, options)
    face_vals = {"alpha": ar1_fit.params.alpha, "beta": ar1_fit.params.beta, "s": 1.0}
    face = _Candidate(face_vals, loglik(face_vals), ar1_fit.n_evaluations,
                      ar1_fit.converged, ("s",))
    best = _select([interior, face], ("alpha", "beta", "s"))
    v = best.values
    result = FitResult(
        "ar2", Ar2Params(v["alpha"], v["beta"], v["s"]), best.log_likelihood, 3,
        best.converged, interior.n_evaluations + face.n_evaluations, Window(1, horizon),
        diagnostics={"boundary": list(best.boundary),
                     "interior_loglik": interior.log_likelihood,
                     "s1_face_loglik": face.log_likelihood})
    return _check_strict(result, options)


def _unified_objective(path, floor):
    y1 = float(path[1])
    y = path[2:].astype(float)
    lag_log = np.log(np.maximum(path.astype(float), floor))
    log_y0, log_lag1, log_lag2 = float(lag_log[0]), lag_log[1:-1], lag_log[:-2]
    k = np.arange(len(path), dtype=float)
    const = float(gammaln(path[1:] + 1.0).sum())

    def loglik(p):
        a, b, w, u, v = p["alpha"], p["beta"], p["w"], p["u"], p["v"]
        log_k = np.log(k * a + 1.0)
        log_m = b * log_k[2:]
        # y0^u lag^(1-u) times the decay factors, collected in one exponent
        e1 = (u * log_y0 - log_m) + (1.0 - u) * (log_lag1 + b * log_k[1:-1])
        e2 = (v * log_y0 - log_m) + (1.0 - v) * (log_lag2 + b * log_k[:-2])
        mu = w * np.exp(e1) + (1.0 - w) * np.exp(e2)
        log_mu1 = log_y0 - b * log_k[1]
        return (y1 * log_mu1 - math.exp(log_mu1)
                + float(y @ np.log(mu)) - float(mu.sum()) - const)
    return loglik


def _unified_starts(options: FitOptions, n_starts: int) -> list:
    starts = [{"alpha": 1.0, "beta": 1.0, "w": 0.5, "u": 0.5, "v": 0.5}]
    rng = np.random.default_rng(options.rng_seed)
    for _ in range(n_starts - 1):
        a, b = rng.uniform(0.05, 5.0, size=2)
        w, u, v = rng.uniform(0.02, 0.98, size=3)
        starts.append({"alpha": float(a), "beta": float(b),
                       "w": float(w), "u": float(u), "v": float(v)})
    return starts


def fit_unified_family(series: EventSeries, horizon: int, options: FitOptions,
                       fixed: Optional[dict] = None, embedded: tuple = (),
                       n_starts: Optional[int] = None, model: str = "unified") -> FitResult:
    """Multi-start fit of the unified model with some weights held fixed.

    ``embedded`` holds complete parameter dicts (typically optima of nested
    models) that compete as candidates without further optimisation.
    ``n_params`` counts free parameters; a weight made inert by ``w`` at a
    boundary must be passed in ``fixed``.
    """
    fixed = dict(fixed or {})
    n_free = 5 - len(fixed)
    if horizon < max(n_free, 1):
        raise TooFewPoints(f"{model} fit needs horizon >= {n_free}")
    path = series.after_path(horizon)
    loglik = _unified_objective(path, options.zero_floor)
    n_starts = options.n_starts if n_starts is None else n_starts

    cands = []
    spread = []
    for start in _unified_starts(options, max(n_starts, 1)):
        start.update(fixed)
        cand = _fit_box(loglik, _UNIFIED_KINDS, start, fixed, options, _UNIFIED_INERT)
        spread.append(cand.log_likelihood)
        cands.append(cand)
    for emb in embedded:
        vals = {k: float(emb[k]) for k in _UNIFIED_ORDER}
        if any(vals[k] != v for k, v in fixed.items()):
            raise ValueError("embedded candidate violates fixed weights")
        cands.append(_Candidate(vals, loglik(vals), 1, bool(emb.get("converged", True)),
                                ("embedded",)))
    best = _select(cands, _UNIFIED_ORDER)
    v = best.values
    result = FitResult(
        model, UnifiedParams(*(v[k] for k in _UNIFIED_ORDER)), best.log_likelihood,
        n_free, best.converged, sum(c.n_evaluations for c in cands), Window(1, horizon),
        diagnostics={"boundary": list(best.boundary),
                     "fixed": fixed,
                     "multistart_loglik": spread,
                     "multistart_spread": (max(spread) - min(spread)) if spread else 0.0})
    return _check_strict(result, options)


def fit_unified(series: EventSeries, horizon: int, options: FitOptions = FitOptions(),
                ar2_fit: Optional[FitResult] = None,
                anchored_fit: Optional[FitResult] = None) -> FitResult:
    """Five-parameter unified fit.

    Besides the multi-start search, the AR(2) optimum (``u = v = 0``,
    ``w = s``) and the best anchored power-decay curve (``u = v = 1``)
    compete as candidates, which guarantees the nesting inequalities.
    """
    if horizon < 5:
        raise TooFewPoints("unified fit needs horizon >= 5")
    if ar2_fit is None:
        ar2_fit = fit_ar2(series, horizon, options)
    p = ar2_fit.params
    ar2_emb = {"alpha": p.alpha, "beta": p.beta, "w": p.s, "u": 0.0, "v": 0.0,
               "converged": ar2_fit.converged}
    anchored = anchored_fit
    if anchored is None:
        anchored = fit_unified_family(series, horizon, options,
                                      fixed={"w": 1.0, "u": 1.0, "v": 1.0}, n_starts=1)
    q = anchored.params
    anchored_emb = {"alpha": q.alpha, "beta": q.beta, "w": 1.0, "u": 1.0, "v": 1.0,
                    "converged": anchored.converged}
    return fit_unified_family(series, horizon, options, embedded=(ar2_emb, anchored_emb))
