import sys
import numpy as np
import pytest

from decaypois.core import validate_series


@pytest.fixture
def tiny_series():
    return validate_series([5, 100, 7], 1)


def series_from_path(path):
    """Conditional-model series: the path starts at the event day."""
    return validate_series([int(x) for x in path], 0)


def numpy_ar_paths(rng, alpha, beta, y0, horizon, n, s=1.0):
    """AR paths drawn with numpy's own Poisson sampler (independent of the package)."""
    paths = np.empty((n, horizon + 1), dtype=np.int64)
    paths[:, 0] = y0
    for m in range(1, horizon + 1):
        f1 = (((m - 1) * alpha + 1) / (m * alpha + 1)) ** beta
        lag1 = np.maximum(paths[:, m - 1], 0.5)
        if m == 1:
            mu = lag1 * f1
        else:
            f2 = (((m - 2) * alpha + 1) / (m * alpha + 1)) ** beta
            mu = s * lag1 * f1 + (1 - s) * np.maximum(paths[:, m - 2], 0.5) * f2
        paths[:, m] = rng.poisson(mu)
    return paths


def fd_hessian(f, x, rel_step=1e-4):
    """Central finite-difference Hessian of a (possibly vectorised) function."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    h = rel_step * np.maximum(1.0, np.abs(x))
    f0 = f(x)
    hess = [[None] * n for _ in range(n)]
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        hess[i][i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (
                4 * h[i] * h[j])
            hess[i][j] = hess[j][i] = val
    return hess


def mc_expected_neg_hessian_indep(alpha, beta, gamma, offsets, n_rep, seed):
    """Monte-Carlo E[-d2 l] of the independence model from numpy Poisson draws.

    The finite-difference Hessian is linear in the data, so the replicate
    average equals the Hessian of the replicate-averaged log-likelihood.
    """
    t = np.abs(np.asarray(offsets, dtype=float))
    rng = np.random.default_rng(seed)
    ybar = rng.poisson(gamma / (alpha * t + 1) ** beta, size=(n_rep, len(t))).mean(axis=0)

    def f(theta):
        a, b, g = theta
        mu = g / (a * t + 1) ** b
        return float(np.sum(ybar * np.log(mu) - mu))
    return -np.array(fd_hessian(f, [alpha, beta, gamma]), dtype=float)


def mc_expected_neg_hessian_ar1(alpha, beta, y0, horizon, n_rep, seed):
    rng = np.random.default_rng(seed)
    paths = numpy_ar_paths(rng, alpha, beta, y0, horizon, n_rep).astype(float)
    m = np.arange(1, horizon + 1, dtype=float)
    lag = np.maximum(paths[:, :-1], 0.5)
    # sufficient statistics of the replicate-averaged AR(1) log-likelihood
    y_mean = paths[:, 1:].mean(axis=0)
    lag_mean = lag.mean(axis=0)
    log_lag_y = (paths[:, 1:] * np.log(lag)).mean(axis=0)

    def f(theta):
        a, b = theta
        log_f = b * (np.log((m - 1) * a + 1) - np.log(m * a + 1))
        return float(np.sum(log_lag_y + y_mean * log_f - lag_mean * np.exp(log_f)))
    return -np.array(fd_hessian(f, [alpha, beta]), dtype=float)


def sig_digit_agreement(a, b, digits=3):
    """True when ``a`` and ``b`` agree to ``digits`` significant digits."""
    return abs(a - b) <= 0.5 * 10.0 ** (1 - digits) * abs(b)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
