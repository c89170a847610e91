"""Gaussian toy data for the selection studies."""

import numpy as np


def rotated(rng, spectrum):
    d = len(spectrum)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * spectrum) @ q.T, q


def three_regime(seed, d=64, n_real=200, sizes=(334, 333, 333)):
    """Real rows from N(mu, Sigma_t); the pool mixes a shrunk copy of Sigma_t, an
    isotropic shifted blob and an inflated shifted copy of Sigma_t."""
    rng = np.random.default_rng(seed)
    cov_t, _ = rotated(rng, 4.0 * 0.9 ** np.arange(d))
    chol = np.linalg.cholesky(cov_t)
    mu = rng.standard_normal(d)
    real = mu + rng.standard_normal((n_real, d)) @ chol.T
    pool = np.vstack([
        mu + rng.standard_normal((sizes[0], d)) @ (0.4 * chol).T,
        mu + 0.5 + rng.standard_normal((sizes[1], d)),
        mu - 0.5 + rng.standard_normal((sizes[2], d)) @ (1.8 * chol).T,
    ])
    return real, pool, rng


def leak_pool(seed, d=64, n_real=200, n_shifted=800, n_leak=200):
    """80% of the pool from a different covariance, 20% (the last rows) from the real distribution."""
    rng = np.random.default_rng(seed)
    cov_t, _ = rotated(rng, 4.0 * 0.9 ** np.arange(d))
    chol = np.linalg.cholesky(cov_t)
    mu = rng.standard_normal(d)
    real = mu + rng.standard_normal((n_real, d)) @ chol.T
    shifted, _ = rotated(rng, np.linspace(0.2, 6.0, d))
    pool = np.vstack([
        mu + rng.standard_normal((n_shifted, d)) @ np.linalg.cholesky(shifted).T,
        mu + rng.standard_normal((n_leak, d)) @ chol.T,
    ])
    return real, pool, n_shifted


def shape_only(seed, d=32, n_real=200, sizes=(334, 333, 333)):
    """Pool regimes share the trace normalization Tr[Sigma_t^{-1} Sigma] = d and differ in shape only.

    Regime 0 has the real covariance; regimes 1 and 2 are isotropic and spectrum-reversed.
    """
    rng = np.random.default_rng(seed)
    spectrum = 0.85 ** np.arange(d)
    spectrum *= d / spectrum.sum()
    cov_t, q = rotated(rng, spectrum)
    root = q * np.sqrt(spectrum)
    mu = rng.standard_normal(d)
    real = mu + rng.standard_normal((n_real, d)) @ root.T
    iso = d / np.sum(1 / spectrum)
    reversed_spec = spectrum[::-1] * d / np.sum(spectrum[::-1] / spectrum)
    pool = np.vstack([
        mu + rng.standard_normal((sizes[0], d)) @ root.T,
        mu + 0.5 + np.sqrt(iso) * rng.standard_normal((sizes[1], d)),
        mu - 0.5 + (rng.standard_normal((sizes[2], d)) * np.sqrt(reversed_spec)) @ q.T,
    ])
    return real, pool, np.repeat([0, 1, 2], sizes)
