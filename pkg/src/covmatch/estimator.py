"""Min-norm least squares, exact excess risk, and Monte Carlo risk estimates."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from covmatch.errors import CovmatchError, DataError, ParameterError
from covmatch.gen import CovarianceModel, DatasetSpec, sample_beta_sphere, sample_dataset


def _rtol(n: int, p: int) -> float:
    return max(n, p) * np.finfo(float).eps


def _as_matrix(cov) -> np.ndarray:
    return cov.matrix if isinstance(cov, CovarianceModel) else np.asarray(cov, dtype=float)


def min_norm_ls(x, y) -> np.ndarray:
    """The minimum-norm minimizer of ``||y - X b||``, i.e. ``(X^T X)^+ X^T y``.

    Singular values below ``max(n, p) * eps * s_max`` are treated as zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1 or y.shape != (x.shape[0],):
        raise DataError(f"incompatible shapes X{x.shape}, y{y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("non-finite entries in X or y")
    n, p = x.shape
    # gelsd: SVD-based, never forms U explicitly
    beta_hat, *_ = scipy.linalg.lstsq(
        x, y, cond=_rtol(n, p), lapack_driver="gelsd", check_finite=False
    )
    return beta_hat


def excess_risk(beta_hat, beta, cov_t, mu_t) -> float:
    """``(b - beta)^T (Sigma_t + mu_t mu_t^T) (b - beta)`` evaluated in closed form."""
    d = np.asarray(beta_hat, dtype=float) - np.asarray(beta, dtype=float)
    mu_t = np.asarray(mu_t, dtype=float)
    sigma_t = _as_matrix(cov_t)
    if sigma_t.shape != (d.size, d.size) or mu_t.shape != d.shape:
        raise DataError("dimension mismatch in excess_risk")
    return float(d @ sigma_t @ d + (mu_t @ d) ** 2)


def bias_variance(x, beta, cov_t, mu_t, sigma: float) -> tuple[float, float]:
    """Conditional-on-X bias and variance of the min-norm estimator.

    bias = beta^T P A P beta with P the projector onto the null space of X,
    variance = (sigma^2 / n) Tr[Sigma_hat^+ A], where A = Sigma_t + mu_t mu_t^T.
    """
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    mu_t = np.asarray(mu_t, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(beta)) and np.all(np.isfinite(mu_t))):
        raise DataError("non-finite inputs to bias_variance")
    if not np.isfinite(sigma) or sigma < 0:
        raise DataError(f"invalid noise level {sigma}")
    n, p = x.shape
    a = _as_matrix(cov_t) + np.outer(mu_t, mu_t)
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    rank = int(np.sum(s > _rtol(n, p) * s[0])) if s.size and s[0] > 0 else 0
    v = vt[:rank].T
    null_beta = beta - v @ (v.T @ beta)
    bias = float(null_beta @ a @ null_beta)
    # (sigma^2/n) Tr[Sigma_hat^+ A] with Sigma_hat^+ = n V S^-2 V^T
    variance = float(sigma**2 * np.sum(np.einsum("ij,ik,kj->j", v, a, v) / s[:rank] ** 2))
    return max(bias, 0.0), max(variance, 0.0)


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    std_error: float
    trials: int
    per_trial: np.ndarray | None = None

    @classmethod
    def from_trials(cls, risks, keep: bool = True) -> RiskEstimate:
        risks = np.asarray(risks, dtype=float)
        se = float(np.std(risks, ddof=1) / np.sqrt(risks.size))
        return cls(float(np.mean(risks)), se, int(risks.size), risks if keep else None)


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Seed for trial ``trial``; depends only on ``(master_seed, trial)``."""
    return np.random.SeedSequence(master_seed, spawn_key=(trial,))


def _one_trial(spec: DatasetSpec, master_seed: int, trial: int, beta_radius) -> float:
    data_seed, beta_seed = trial_seed(master_seed, trial).spawn(2)
    if beta_radius is not None:
        spec = replace(spec, beta=sample_beta_sphere(spec.p, beta_radius, beta_seed))
    try:
        data = sample_dataset(spec, data_seed)
        beta_hat = min_norm_ls(data.x, data.y)
        return excess_risk(beta_hat, spec.beta, spec.cov_t, spec.means.mu_t)
    except CovmatchError as exc:
        raise type(exc)(f"trial {trial}: {exc}") from exc


def monte_carlo_risk(
    spec: DatasetSpec,
    trials: int,
    master_seed: int = 0,
    beta_radius: float | None = None,
    workers: int = 1,
) -> RiskEstimate:
    """Average excess risk of the min-norm estimator over independent dataset draws.

    With ``beta_radius=None`` the coefficient vector ``spec.beta`` is held fixed;
    otherwise every trial draws a fresh one from the sphere of that radius.
    Trials are seeded independently, so the result does not depend on ``workers``.
    """
    if int(trials) != trials or trials < 2:
        raise ParameterError(f"need at least 2 trials, got {trials}")
    trials = int(trials)
    if workers <= 1:
        risks = [_one_trial(spec, master_seed, i, beta_radius) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            risks = list(pool.map(lambda i: _one_trial(spec, master_seed, i, beta_radius), range(trials)))
    return RiskEstimate.from_trials(risks)
