"""Deterministic equivalents of the min-norm risk on mixed real and synthetic data.

Under-parameterized (n > p): the risk is determined by the spectrum of
``M^T M`` with ``M = Sigma_s^{1/2} Sigma_t^{-1/2}`` through a scalar fixed point
``(alpha1, alpha2)``.  Over-parameterized (n < p): covariances are assumed to
share an eigenbasis and the risk splits into a variance ``V`` and a bias ``B``
driven by two four-coefficient systems ``a`` and ``b``.  Neither depends on the
means of the two distributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from covmatch.errors import DataError, NumericalError, ParameterError
from covmatch.gen import CovarianceModel

UNDER_TOL = 1e-12
OVER_TOL = 1e-8
MAX_BISECTIONS = 200
MAX_NEWTON = 500


def m_spectrum(cov_s: CovarianceModel, cov_t: CovarianceModel) -> np.ndarray:
    """Eigenvalues of ``M^T M``, equivalently of ``Sigma_t^{-1} Sigma_s``, in decreasing order."""
    if cov_s.dim != cov_t.dim:
        raise DataError(f"dimension mismatch: {cov_s.dim} vs {cov_t.dim}")
    try:
        lam = scipy.linalg.eigh(cov_s.matrix, cov_t.matrix, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("generalized eigenproblem failed") from exc
    return lam[::-1].copy()


# ----------------------------------------------------------------------------
# Under-parameterized regime
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class UnderFixedPoint:
    alpha1: float
    alpha2: float
    residual: float
    iterations: int
    boundary: bool = False


def _check_under(lam, n, n_s, allow_zero=False):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim < 1 or lam.shape[-1] < 1:
        raise ParameterError("spectrum must be non-empty")
    if not np.all(np.isfinite(lam)):
        raise ParameterError("spectrum has non-finite entries")
    if np.any(lam < 0) or (not allow_zero and np.any(lam <= 0)):
        raise ParameterError("spectrum entries must be positive")
    p = lam.shape[-1]
    if not n > p:
        raise ParameterError(f"under-parameterized formulas need n > p, got n={n}, p={p}")
    if not 0 < n_s <= n:
        raise ParameterError(f"need 0 < n_s <= n, got n_s={n_s}, n={n}")
    return lam, p


def _under_residual(lam, alpha1, n, n_s, p):
    """Second fixed-point equation with ``alpha2 = 1 - p/n - alpha1`` substituted.

    Vectorized over leading axes of ``lam`` (alpha1 broadcast against them).
    """
    alpha2 = (1.0 - p / n) - alpha1
    a1 = np.asarray(alpha1)[..., None]
    a2 = np.asarray(alpha2)[..., None]
    la = lam * a1
    # a zero eigenvalue contributes nothing, including at the alpha2 = 0 endpoint
    ratio = np.divide(la, la + a2, out=np.zeros(np.broadcast(la, a2).shape), where=la > 0)
    return alpha1 + np.sum(ratio, axis=-1) / n - n_s / n


def _bisect_alpha(lam: np.ndarray, n: float, n_s: float):
    """Batched bisection for alpha1 over the rows of ``lam`` (shape ``(m, p)``).

    Returns ``(alpha1, residual, iterations, feasible)``.  A row is infeasible
    when the residual does not change sign on ``(0, 1 - p/n)``; that happens
    only when zero eigenvalues outnumber the training rows.
    """
    m, p = lam.shape
    upper = 1.0 - p / n
    n_t = n - n_s
    zeros = np.sum(lam == 0, axis=1)
    # residual tends to (n_t - #zero eigenvalues) / n at the upper end
    feasible = (n_t - zeros) > 0
    lo = np.zeros(m)
    hi = np.full(m, upper)
    it = 0
    for it in range(1, MAX_BISECTIONS + 1):
        mid = 0.5 * (lo + hi)
        f = _under_residual(lam, mid, n, n_s, p)
        neg = f < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= 2.0 * np.finfo(float).eps * np.maximum(hi, 1e-300)):
            break
    f_lo = _under_residual(lam, lo, n, n_s, p)
    f_hi = _under_residual(lam, hi, n, n_s, p)
    pick_lo = np.abs(f_lo) <= np.abs(f_hi)
    alpha1 = np.where(pick_lo, lo, hi)
    residual = np.where(pick_lo, np.abs(f_lo), np.abs(f_hi))
    return alpha1, residual, it, feasible


def solve_under_fixed_point(m_spectrum, n: float, n_s: float) -> UnderFixedPoint:
    """Solve ``alpha1 + alpha2 = 1 - p/n`` together with the spectral equation by bisection.

    When ``n_s == n`` (no training rows) the root sits on the boundary
    ``alpha2 = 0`` and is returned with ``boundary=True``.
    """
    lam, p = _check_under(m_spectrum, n, n_s)
    upper = 1.0 - p / n
    if n_s == n:
        res = abs(float(_under_residual(lam[None, :], np.array([upper]), n, n_s, p)[0]))
        return UnderFixedPoint(upper, 0.0, res, 0, boundary=True)
    alpha1, residual, it, _ = _bisect_alpha(lam[None, :], n, n_s)
    if residual[0] > UNDER_TOL:
        raise NumericalError(f"fixed point did not converge: residual {residual[0]:.3e}")
    a1 = float(alpha1[0])
    return UnderFixedPoint(a1, upper - a1, float(residual[0]), it)


def risk_under_from_alpha(alpha1: float, n: float, n_s: float, p: int, sigma: float = 1.0) -> float:
    """Closed form ``sigma^2 ((1 - n_s/n) / (1 - p/n - alpha1) - 1)``, increasing in alpha1.

    Undefined on the boundary ``n_s == n``; use the trace form there.
    """
    if n_s >= n:
        raise ParameterError("closed form needs training rows (n_s < n)")
    return sigma**2 * ((1.0 - n_s / n) / (1.0 - p / n - alpha1) - 1.0)


def risk_under(m_spectrum, n: float, n_s: float, sigma: float = 1.0) -> float:
    """Deterministic equivalent ``(sigma^2/n) Tr[(alpha1 M^T M + alpha2 I)^{-1}]``."""
    lam = np.asarray(m_spectrum, dtype=float)
    fp = solve_under_fixed_point(lam, n, n_s)
    return float(sigma**2 / n * np.sum(1.0 / (lam * fp.alpha1 + fp.alpha2)))


def under_objective_batch(spectra: np.ndarray, n: float, n_s: float) -> np.ndarray:
    """``(1/n) Tr[(alpha1 M^T M + alpha2 I)^{-1}]`` for each row of ``spectra``.

    Zero eigenvalues are allowed; rows with no interior fixed point get ``inf``.
    """
    lam, p = _check_under(np.atleast_2d(spectra), n, n_s, allow_zero=True)
    alpha1, _, _, feasible = _bisect_alpha(lam, n, n_s)
    alpha2 = (1.0 - p / n) - alpha1
    with np.errstate(divide="ignore"):
        value = np.sum(1.0 / (lam * alpha1[:, None] + alpha2[:, None]), axis=1) / n
    return np.where(feasible, value, np.inf)


def risk_synthetic_only(cov_t: CovarianceModel, cov_s: CovarianceModel, mu_t, mu_s, n: int, sigma: float = 1.0) -> float:
    """Deterministic equivalent when training uses synthetic rows only.

    Unlike the mixed case, the means enter through the synthetic-whitened
    geometry of ``mu_t`` and ``mu_s``.
    """
    p = cov_t.dim
    if cov_s.dim != p:
        raise DataError("dimension mismatch between covariances")
    if not n > p:
        raise ParameterError(f"need n > p, got n={n}, p={p}")
    mu_t = np.asarray(mu_t, dtype=float)
    mu_s = np.asarray(mu_s, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(cov_s.matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("synthetic covariance is singular") from exc
    solve = lambda b: scipy.linalg.cho_solve(factor, b)  # noqa: E731
    trace_term = float(np.trace(solve(cov_t.matrix)))
    mean_t = float(mu_t @ solve(mu_t))
    whitened_s = float(mu_s @ solve(mu_s))
    alignment = 0.0 if whitened_s == 0 else float(mu_t @ solve(mu_s)) ** 2 / whitened_s
    gamma = n / p
    return sigma**2 / n * gamma / (gamma - 1.0) * (trace_term + mean_t - alignment)


# ----------------------------------------------------------------------------
# Over-parameterized regime
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Paired eigenvalues of ``Sigma_s`` and ``Sigma_t`` in a shared eigenbasis.

    ``g_weights[i]`` is the squared projection of ``beta`` on the i-th shared
    eigenvector; the weights sum to ``||beta||^2``.
    """

    lambda_s: np.ndarray
    lambda_t: np.ndarray
    g_weights: np.ndarray | None = None

    def __post_init__(self):
        ls = np.asarray(self.lambda_s, dtype=float)
        lt = np.asarray(self.lambda_t, dtype=float)
        if ls.ndim != 1 or ls.shape != lt.shape or ls.size == 0:
            raise DataError("eigenvalue vectors must be 1-d, non-empty and of equal length")
        if not (np.all(ls > 0) and np.all(lt > 0)) or not np.all(np.isfinite(ls + lt)):
            raise ParameterError("eigenvalues must be finite and strictly positive")
        object.__setattr__(self, "lambda_s", ls)
        object.__setattr__(self, "lambda_t", lt)
        if self.g_weights is not None:
            g = np.asarray(self.g_weights, dtype=float)
            if g.shape != ls.shape or np.any(g < 0) or not np.all(np.isfinite(g)):
                raise DataError("g_weights must be finite, nonnegative and match the spectrum")
            object.__setattr__(self, "g_weights", g)

    @property
    def p(self) -> int:
        return self.lambda_s.size

    @classmethod
    def from_diagonal(cls, cov_s: CovarianceModel, cov_t: CovarianceModel, beta=None) -> SpectralData:
        """Spectral data for diagonal covariances; the shared eigenbasis is the standard one."""
        if not (cov_s.is_diagonal and cov_t.is_diagonal):
            raise ParameterError("from_diagonal needs diagonal covariance models")
        g = None if beta is None else np.asarray(beta, dtype=float) ** 2
        return cls(np.diag(cov_s.matrix).copy(), np.diag(cov_t.matrix).copy(), g)

    @classmethod
    def sphere_average(cls, lambda_s, lambda_t, radius: float) -> SpectralData:
        """Weights ``radius^2 / p``: the expectation of ``<beta, u_i>^2`` over the sphere."""
        ls = np.asarray(lambda_s, dtype=float)
        return cls(ls, lambda_t, np.full(ls.size, radius**2 / ls.size))


@dataclass(frozen=True)
class OverFixedPoint:
    a1: float
    a2: float
    a3: float
    a4: float
    b1: float
    b2: float
    b3: float
    b4: float
    residuals: tuple[float, ...]
    iterations: int


def _over_residuals(ls, lt, gamma, gamma_s, a, b):
    """The eight defining equations, written as ``0 = ...``, averaged over the spectrum."""
    a1, a2, a3, a4 = a
    b1, b2, b3, b4 = b
    da = a1 * ls + a2 * lt + 1.0
    db = b1 * ls + b2 * lt + 1.0
    return (
        1.0 - np.mean((a1 * ls + a2 * lt) / da) / gamma,
        gamma_s / gamma - np.mean(a1 * ls / da) / gamma,
        a1 + a2 + np.mean((a3 * ls + a4 * lt) / da**2) / gamma,
        a1 + np.mean((a3 * ls + ls * lt * (a3 * a2 - a4 * a1)) / da**2) / gamma,
        1.0 - np.mean((b1 * ls + b2 * lt) / db) / gamma,
        gamma_s / gamma - np.mean(b1 * ls / db) / gamma,
        np.mean((ls * (b3 - b1 * lt) + lt * (b4 - b2 * lt)) / db**2),
        np.mean((ls * (b3 - b1 * lt) + ls * lt * (b3 * b2 - b4 * b1)) / db**2),
    )


def _solve_scalar_decreasing(h, target: float) -> float:
    """Root of ``h(x) = target`` on ``(0, inf)`` for ``h`` decreasing from ``h(0) > target`` to 0."""
    hi = 1.0
    while h(hi) > target:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("could not bracket scalar coefficient")
    lo = 0.0
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if h(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2.0 * np.finfo(float).eps * hi:
            break
    return 0.5 * (lo + hi)


def _newton_a12(ls, lt, gamma, gamma_s, gamma_t):
    """Damped Newton on the first two ``a`` equations (multiplied through by gamma)."""

    def g(x):
        a1, a2 = x
        d = a1 * ls + a2 * lt + 1.0
        return np.array([gamma - 1.0 + np.mean(1.0 / d), gamma_s - np.mean(a1 * ls / d)])

    def jac(x):
        a1, a2 = x
        d2 = (a1 * ls + a2 * lt + 1.0) ** 2
        return np.array(
            [
                [-np.mean(ls / d2), -np.mean(lt / d2)],
                [-np.mean(ls * (a2 * lt + 1.0) / d2), np.mean(a1 * ls * lt / d2)],
            ]
        )

    x = np.array([gamma_s, gamma_t]) / (1.0 - gamma)
    r = g(x)
    norm = np.linalg.norm(r)
    for it in range(1, MAX_NEWTON + 1):
        if norm <= 1e-15:
            return x, it - 1
        try:
            step = np.linalg.solve(jac(x), -r)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Jacobian in coefficient solve") from exc
        t = 1.0
        while True:
            trial = x + t * step
            if np.all(trial > 0):
                r_trial = g(trial)
                n_trial = np.linalg.norm(r_trial)
                if n_trial < norm:
                    break
            t *= 0.5
            if t < 1e-12:
                # no decrease possible: at round-off level or stuck
                if norm <= 1e-12:
                    return x, it
                raise NumericalError(f"damped Newton stalled: residual {norm:.3e}")
        x, r, norm = trial, r_trial, n_trial
    if norm <= 1e-12:
        return x, MAX_NEWTON
    raise NumericalError(f"Newton did not converge in {MAX_NEWTON} iterations: residual {norm:.3e}")


def _solve_2x2(mat, rhs, what):
    mat = np.asarray(mat, dtype=float)
    scale = np.max(np.abs(mat))
    if scale == 0 or abs(np.linalg.det(mat)) <= 1e-14 * scale**2:
        raise NumericalError(f"singular linear system for {what}")
    return np.linalg.solve(mat, rhs)


def solve_over_fixed_point(spectral: SpectralData, n: float, n_s: float) -> OverFixedPoint:
    """Solve both coefficient systems of the over-parameterized risk.

    ``(a1, a2)`` come from damped Newton; ``(a3, a4)`` and ``(b3, b4)`` from
    exact 2x2 solves, since those equations are linear once ``(a1, a2)`` are
    known.  The first two ``b`` equations coincide with the ``a`` ones.
    """
    ls, lt = spectral.lambda_s, spectral.lambda_t
    p = spectral.p
    if not n < p:
        raise ParameterError(f"over-parameterized formulas need n < p, got n={n}, p={p}")
    if not 0 <= n_s <= n or n < 1:
        raise ParameterError(f"need 0 <= n_s <= n and n >= 1, got n_s={n_s}, n={n}")
    gamma, gamma_s, gamma_t = n / p, n_s / p, (n - n_s) / p

    if n_s == 0:
        a1, it = 0.0, 0
        a2 = _solve_scalar_decreasing(lambda a: np.mean(1.0 / (a * lt + 1.0)), 1.0 - gamma)
    elif n_s == n:
        a2, it = 0.0, 0
        a1 = _solve_scalar_decreasing(lambda a: np.mean(1.0 / (a * ls + 1.0)), 1.0 - gamma)
    else:
        (a1, a2), it = _newton_a12(ls, lt, gamma, gamma_s, gamma_t)
    a1, a2 = float(a1), float(a2)

    d2 = (a1 * ls + a2 * lt + 1.0) ** 2
    e_s, e_t, e_st = np.mean(ls / d2), np.mean(lt / d2), np.mean(ls * lt / d2)
    a3, a4 = _solve_2x2(
        [[e_s, e_t], [e_s + a2 * e_st, -a1 * e_st]],
        [-gamma * (a1 + a2), -gamma * a1],
        "(a3, a4)",
    )
    b1, b2 = a1, a2
    e_tt = np.mean(lt * lt / d2)
    b3, b4 = _solve_2x2(
        [[e_s, e_t], [e_s + b2 * e_st, -b1 * e_st]],
        [b1 * e_st + b2 * e_tt, b1 * e_st],
        "(b3, b4)",
    )
    a = (a1, a2, float(a3), float(a4))
    b = (b1, b2, float(b3), float(b4))
    residuals = tuple(float(v) for v in _over_residuals(ls, lt, gamma, gamma_s, a, b))
    worst = max(abs(v) for v in residuals)
    if worst > OVER_TOL:
        raise NumericalError(f"coefficient residual {worst:.3e} exceeds {OVER_TOL:g}")
    return OverFixedPoint(*a, *b, residuals=residuals, iterations=it)


class OverRisk(NamedTuple):
    v: float
    b: float
    total: float


def risk_over_from_fixed_point(spectral: SpectralData, fp: OverFixedPoint, n: float, sigma: float = 1.0) -> OverRisk:
    ls, lt, g = spectral.lambda_s, spectral.lambda_t, spectral.g_weights
    if g is None:
        raise ParameterError("bias term needs g_weights")
    gamma = n / spectral.p
    da = fp.a1 * ls + fp.a2 * lt + 1.0
    db = fp.b1 * ls + fp.b2 * lt + 1.0
    v = sigma**2 / gamma * np.mean(-lt * (fp.a3 * ls + fp.a4 * lt) / da**2)
    b = np.sum(g * (fp.b3 * ls + (fp.b4 + 1.0) * lt) / db**2)
    return OverRisk(float(v), float(b), float(v + b))


def risk_over(spectral: SpectralData, n: float, n_s: float, sigma: float = 1.0) -> OverRisk:
    """Variance ``V``, bias ``B`` and their sum for the over-parameterized regime."""
    if spectral.g_weights is None:
        raise ParameterError("bias term needs g_weights")
    fp = solve_over_fixed_point(spectral, n, n_s)
    return risk_over_from_fixed_point(spectral, fp, n, sigma)


# ----------------------------------------------------------------------------
# Optimality checks
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimalityReport:
    samples: int
    violations: int
    max_violation: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def random_trace_normalized_spectrum(rng: np.random.Generator, p: int) -> np.ndarray:
    """Normalized i.i.d. exponentials scaled to sum to ``p``."""
    e = rng.exponential(size=p)
    return p * e / e.sum()


def check_optimality_under(
    n: int,
    n_s: int,
    p: int,
    num_random_spectra: int,
    rng_seed=None,
    etas=(1.5, 2.0, 4.0),
    tolerance: float = 1e-10,
) -> OptimalityReport:
    """Check that the balanced spectrum beats random trace-normalized ones, and that scaling up helps.

    Every violation amount is ``R(better) - R(worse)``; positive values beyond
    ``tolerance`` count as violations.
    """
    rng = np.random.default_rng(rng_seed)
    balanced = risk_under(np.ones(p), n, n_s)
    worst = balanced - balanced
    violations = 0
    for _ in range(num_random_spectra):
        lam = random_trace_normalized_spectrum(rng, p)
        r = risk_under(lam, n, n_s)
        gaps = [balanced - r] + [risk_under(eta * lam, n, n_s) - r for eta in etas]
        for gap in gaps:
            worst = max(worst, gap)
            violations += gap > tolerance
    return OptimalityReport(num_random_spectra, int(violations), float(worst), tolerance)


def check_optimality_over(
    n: int,
    n_s: int,
    p: int,
    num_random_spectra: int,
    rng_seed=None,
    beta=None,
    sigma: float = 1.0,
    tolerance: float = 1e-8,
) -> OptimalityReport:
    """With isotropic training covariance, ``Sigma_s = I`` should beat random ``Sigma_s`` of trace ``p``.

    ``beta`` defaults to one unit-sphere draw from the same generator.
    """
    rng = np.random.default_rng(rng_seed)
    if beta is None:
        beta = rng.standard_normal(p)
        beta /= np.linalg.norm(beta)
    g = np.asarray(beta, dtype=float) ** 2
    ones = np.ones(p)
    balanced = risk_over(SpectralData(ones, ones, g), n, n_s, sigma).total
    worst = 0.0
    violations = 0
    for _ in range(num_random_spectra):
        lam = random_trace_normalized_spectrum(rng, p)
        r = risk_over(SpectralData(lam, ones, g), n, n_s, sigma).total
        worst = max(worst, balanced - r)
        violations += balanced - r > tolerance
    return OptimalityReport(num_random_spectra, int(violations), float(worst), tolerance)
