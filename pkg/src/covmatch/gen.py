"""Covariances, means, coefficients and sampled datasets for the two-source linear model.

Training rows follow ``x = Sigma_t^{1/2} z + mu_t`` and synthetic rows
``x = Sigma_s^{1/2} z + mu_s``; both share the response ``y = x^T beta + eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from covmatch.errors import DataError, NumericalError, ParameterError

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """A symmetric positive-definite ``p x p`` covariance with its construction history.

    ``provenance`` is a short human-readable tag such as ``"kms(0.9)"`` or
    ``"identity"``; ``scale`` records any multiplicative rescaling applied after
    construction.
    """

    matrix: np.ndarray
    provenance: str = "explicit"
    scale: float = 1.0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DataError(f"covariance must be a non-empty square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DataError("covariance has non-finite entries")
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
            raise DataError("covariance is not symmetric")
        m = 0.5 * (m + m.T)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("covariance is not positive definite") from exc
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        w, v = np.linalg.eigh(self.matrix)
        return w, v

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigh[0]

    @cached_property
    def sqrt(self) -> np.ndarray:
        """Symmetric PSD square root, computed from the eigendecomposition."""
        w, v = self.eigh
        root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
        return 0.5 * (root + root.T)

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.matrix == np.diag(np.diag(self.matrix))))

    def scaled(self, factor: float) -> CovarianceModel:
        if not factor > 0:
            raise ParameterError(f"scale factor must be positive, got {factor}")
        return CovarianceModel(factor * self.matrix, self.provenance, self.scale * factor)


def identity(p: int) -> CovarianceModel:
    return CovarianceModel(np.eye(_check_dim(p)), "identity")


def diagonal(values) -> CovarianceModel:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ParameterError("diagonal covariance needs a non-empty vector")
    return CovarianceModel(np.diag(values), "diagonal")


def kms_matrix(p: int, rho: float) -> CovarianceModel:
    """Kac-Murdock-Szego Toeplitz matrix with entries ``rho**|i - j|``."""
    p = _check_dim(p)
    if not -1.0 < rho < 1.0:
        raise ParameterError(f"KMS parameter must satisfy |rho| < 1, got {rho}")
    column = float(rho) ** np.arange(p)
    return CovarianceModel(scipy.linalg.toeplitz(column), f"kms({rho:g})")


def trace_ratio(cov_s: CovarianceModel, cov_t: CovarianceModel) -> float:
    """``Tr[Sigma_s Sigma_t^{-1}]``, i.e. ``Tr[M^T M]`` for ``M = Sigma_s^{1/2} Sigma_t^{-1/2}``."""
    if cov_s.dim != cov_t.dim:
        raise DataError(f"dimension mismatch: {cov_s.dim} vs {cov_t.dim}")
    try:
        factor = scipy.linalg.cho_factor(cov_t.matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("training covariance is singular") from exc
    return float(np.trace(scipy.linalg.cho_solve(factor, cov_s.matrix)))


def scale_to_trace_constraint(cov_s: CovarianceModel, cov_t: CovarianceModel) -> CovarianceModel:
    """Rescale ``Sigma_s`` so that ``Tr[Sigma_s Sigma_t^{-1}] = p``."""
    ratio = trace_ratio(cov_s, cov_t)
    if not np.isfinite(ratio) or ratio <= 0:
        raise NumericalError(f"trace ratio is not positive: {ratio}")
    return cov_s.scaled(cov_s.dim / ratio)


@dataclass(frozen=True, eq=False)
class MeanPair:
    mu_t: np.ndarray
    mu_s: np.ndarray
    r_t: float
    r_s: float
    cos_phi: float

    @property
    def dim(self) -> int:
        return self.mu_t.shape[0]


def zero_means(p: int) -> MeanPair:
    return MeanPair(np.zeros(p), np.zeros(p), 0.0, 0.0, 1.0)


def _unit_direction(rng: np.random.Generator, p: int) -> np.ndarray:
    v = rng.standard_normal(p)
    return v / np.linalg.norm(v)


def make_mean_pair(p: int, r_t: float, r_s: float, cos_phi: float, rng_seed=None) -> MeanPair:
    """Means of norms ``r_t sqrt(p)`` and ``r_s sqrt(p)`` whose cosine similarity is ``cos_phi``."""
    p = _check_dim(p)
    if not 0.0 <= cos_phi <= 1.0:
        raise ParameterError(f"cos_phi must lie in [0, 1], got {cos_phi}")
    if r_t < 0 or r_s < 0:
        raise ParameterError("mean scales must be nonnegative")
    if p < 2 and cos_phi < 1.0:
        raise ParameterError("an angle between the means needs p >= 2")
    rng = np.random.default_rng(rng_seed)
    u_t = _unit_direction(rng, p)
    if cos_phi < 1.0:
        w = rng.standard_normal(p)
        w -= (w @ u_t) * u_t
        u_perp = w / np.linalg.norm(w)
        u_s = cos_phi * u_t + np.sqrt(1.0 - cos_phi**2) * u_perp
    else:
        u_s = u_t
    scale = np.sqrt(p)
    return MeanPair(r_t * scale * u_t, r_s * scale * u_s, float(r_t), float(r_s), float(cos_phi))


def sample_beta_sphere(p: int, radius: float, rng_seed=None) -> np.ndarray:
    """A coefficient vector drawn uniformly from the sphere of the given radius."""
    p = _check_dim(p)
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(rng_seed)
    return radius * _unit_direction(rng, p)


@dataclass(frozen=True, eq=False)
class DatasetSpec:
    """Generation parameters for one realization of the mixed training set."""

    p: int
    n_t: int
    n_s: int
    sigma: float
    cov_t: CovarianceModel
    cov_s: CovarianceModel
    means: MeanPair
    beta: np.ndarray
    noise_dist: str = "gaussian"
    entry_dist: str = "gaussian"

    def __post_init__(self):
        if self.p < 1 or self.n_t < 0 or self.n_s < 0 or self.n_t + self.n_s < 1:
            raise ParameterError(f"invalid sizes p={self.p}, n_t={self.n_t}, n_s={self.n_s}")
        if not self.sigma >= 0:
            raise ParameterError(f"noise level must be nonnegative, got {self.sigma}")
        if self.cov_t.dim != self.p or self.cov_s.dim != self.p or self.means.dim != self.p:
            raise DataError("covariance or mean dimension disagrees with p")
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (self.p,):
            raise DataError(f"beta must have shape ({self.p},), got {beta.shape}")
        object.__setattr__(self, "beta", beta)
        if self.noise_dist != "gaussian" or self.entry_dist != "gaussian":
            raise ParameterError("only gaussian entries and noise are supported")

    @property
    def n(self) -> int:
        return self.n_t + self.n_s

    @property
    def gamma(self) -> float:
        return self.n / self.p

    @property
    def gamma_t(self) -> float:
        return self.n_t / self.p

    @property
    def gamma_s(self) -> float:
        return self.n_s / self.p


@dataclass(frozen=True, eq=False)
class Dataset:
    """A realized sample; rows are ordered training first, then synthetic."""

    x: np.ndarray
    y: np.ndarray
    spec: DatasetSpec = field(repr=False)

    @property
    def x_t(self) -> np.ndarray:
        return self.x[: self.spec.n_t]

    @property
    def x_s(self) -> np.ndarray:
        return self.x[self.spec.n_t :]


def sample_dataset(spec: DatasetSpec, rng_seed=None) -> Dataset:
    rng = np.random.default_rng(rng_seed)
    p = spec.p
    z_t = rng.standard_normal((spec.n_t, p))
    z_s = rng.standard_normal((spec.n_s, p))
    x = np.empty((spec.n, p))
    x[: spec.n_t] = z_t @ spec.cov_t.sqrt + spec.means.mu_t
    x[spec.n_t :] = z_s @ spec.cov_s.sqrt + spec.means.mu_s
    y = x @ spec.beta + spec.sigma * rng.standard_normal(spec.n)
    return Dataset(x, y, spec)


def _check_dim(p) -> int:
    if int(p) != p or p < 1:
        raise ParameterError(f"dimension must be a positive integer, got {p}")
    return int(p)
