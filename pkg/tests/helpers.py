"""Shared oracles for the test suite, kept independent of the library paths."""

import numpy as np


def gaussian_logpdf(x, mean, cov):
    """Dense multivariate normal log-density (direct slogdet/solve evaluation)."""
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    _, logdet = np.linalg.slogdet(cov)
    return -0.5 * (d.shape[0] * np.log(2.0 * np.pi) + logdet + d @ np.linalg.solve(cov, d))


def random_psd(n, rng, scale=1.0):
    m = rng.standard_normal((n, n))
    return scale * (m @ m.T) / n


def simpson(f, a, b, n_intervals):
    """Composite Simpson quadrature of a callable; n_intervals must be even."""
    assert n_intervals % 2 == 0
    x = np.linspace(a, b, n_intervals + 1)
    y = f(x)
    h = (b - a) / n_intervals
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def ar1_series(n, rho, rng, sigma=1.0):
    """Stationary AR(1) sample path."""
    noise = rng.standard_normal(n) * sigma
    x = np.empty(n)
    x[0] = noise[0] / np.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + noise[t]
    return x
