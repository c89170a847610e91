"""Parameter sweeps pairing Monte Carlo risk with its deterministic equivalent."""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from covmatch import gen, theory
from covmatch.errors import ParameterError
from covmatch.estimator import RiskEstimate, monte_carlo_risk

REGIMES = ("under", "over", "synthetic-only")
SWEEPABLE = ("cos_phi", "rho_s", "eta_scale", "n_s")


@dataclass(frozen=True)
class SimulationConfig:
    """One point of the synthetic-augmentation experiment.

    Covariances are KMS matrices (diagonalized to their sorted eigenvalues in
    the over-parameterized regime, so both share the standard eigenbasis),
    rescaled so that ``Tr[Sigma_s Sigma_t^{-1}] = p`` and then multiplied by
    ``eta_scale``.
    """

    regime: str = "under"
    p: int = 600
    n_t: int = 1200
    n_s: int = 1200
    rho_t: float = 0.9
    rho_s: float = 0.5
    mu_scale: float = 2.0
    cos_phi: float = 1.0
    eta_scale: float = 1.0
    sigma: float = 1.0
    beta_radius: float = 1.0
    identity_cov: bool = False
    zero_mean: bool = False
    trace_scale: bool = True
    resample_beta: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ParameterError(f"unknown regime {self.regime!r}")
        if self.regime == "synthetic-only" and self.n_t != 0:
            object.__setattr__(self, "n_t", 0)
        if self.p < 1 or self.n_t < 0 or self.n_s < 0:
            raise ParameterError("sizes must be nonnegative and p positive")
        if not (-1 < self.rho_t < 1 and -1 < self.rho_s < 1):
            raise ParameterError("KMS parameters must satisfy |rho| < 1")
        if not 0 <= self.cos_phi <= 1:
            raise ParameterError("cos_phi must lie in [0, 1]")
        if not self.eta_scale > 0 or not self.beta_radius > 0 or self.sigma < 0 or self.mu_scale < 0:
            raise ParameterError("eta_scale and beta_radius must be positive; sigma, mu_scale nonnegative")

    @property
    def n(self) -> int:
        return self.n_t + self.n_s


def build_covariances(config: SimulationConfig) -> tuple[gen.CovarianceModel, gen.CovarianceModel]:
    """Return ``(cov_t, cov_s)`` for a configuration."""
    p = config.p
    if config.identity_cov:
        cov_t, cov_s = gen.identity(p), gen.identity(p)
    else:
        cov_t, cov_s = gen.kms_matrix(p, config.rho_t), gen.kms_matrix(p, config.rho_s)
        if config.regime == "over":
            cov_t, cov_s = gen.diagonal(cov_t.eigenvalues), gen.diagonal(cov_s.eigenvalues)
    if config.trace_scale:
        cov_s = gen.scale_to_trace_constraint(cov_s, cov_t)
    if config.eta_scale != 1.0:
        cov_s = cov_s.scaled(config.eta_scale)
    return cov_t, cov_s


def _seed(master_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=key).generate_state(1, np.uint64)[0])


def build_spec(config: SimulationConfig, master_seed: int = 0) -> gen.DatasetSpec:
    """Dataset specification; means and beta depend on ``master_seed`` only, not on the grid point."""
    cov_t, cov_s = build_covariances(config)
    p = config.p
    if config.zero_mean:
        means = gen.zero_means(p)
    else:
        means = gen.make_mean_pair(p, config.mu_scale, config.mu_scale, config.cos_phi, _seed(master_seed, 0))
    beta = gen.sample_beta_sphere(p, config.beta_radius, _seed(master_seed, 1))
    return gen.DatasetSpec(p, config.n_t, config.n_s, config.sigma, cov_t, cov_s, means, beta)


def theory_value(config: SimulationConfig, spec: gen.DatasetSpec) -> float:
    n = config.n
    if config.regime == "under":
        lam = theory.m_spectrum(spec.cov_s, spec.cov_t)
        return theory.risk_under(lam, n, config.n_s, config.sigma)
    if config.regime == "synthetic-only":
        return theory.risk_synthetic_only(
            spec.cov_t, spec.cov_s, spec.means.mu_t, spec.means.mu_s, n, config.sigma
        )
    if config.resample_beta:
        spectral = theory.SpectralData.sphere_average(
            np.diag(spec.cov_s.matrix), np.diag(spec.cov_t.matrix), config.beta_radius
        )
    else:
        spectral = theory.SpectralData.from_diagonal(spec.cov_s, spec.cov_t, spec.beta)
    return theory.risk_over(spectral, n, config.n_s, config.sigma).total


@dataclass(frozen=True)
class ExperimentSweep:
    swept_parameter: str
    grid: tuple[float, ...]
    base: SimulationConfig
    trials: int = 100
    master_seed: int = 0

    def __post_init__(self):
        if self.swept_parameter not in SWEEPABLE:
            raise ParameterError(f"cannot sweep {self.swept_parameter!r}; choose from {SWEEPABLE}")
        grid = tuple(float(v) for v in self.grid)
        if not grid or not all(np.isfinite(grid)):
            raise ParameterError("sweep grid must be non-empty and finite")
        if self.swept_parameter == "n_s" and any(v != int(v) or v < 0 for v in grid):
            raise ParameterError("n_s grid values must be nonnegative integers")
        object.__setattr__(self, "grid", grid)
        # surface domain errors before any simulation runs
        for v in grid:
            self.config_at(v)

    def config_at(self, value: float) -> SimulationConfig:
        if self.swept_parameter == "n_s":
            value = int(value)
        return replace(self.base, **{self.swept_parameter: value})


@dataclass
class OutputTable:
    rows: list[tuple[float, float, float, float]] = field(default_factory=list)
    header: tuple[str, ...] = ("param", "empirical_mean", "empirical_stderr", "theory")
    estimates: list[RiskEstimate] = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(self.header) + "\n")
        for row in self.rows:
            out.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        return out.getvalue()

    @property
    def means(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def std_errors(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    @property
    def theory(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])


def run_sweep(sweep: ExperimentSweep, workers: int = 1, theory_only: bool = False) -> OutputTable:
    """Theory for every grid point first (so solver failures abort early), then Monte Carlo.

    Grid point ``g`` uses its own Monte Carlo seed stream, independent of the
    others.
    """
    points = []
    for value in sweep.grid:
        config = sweep.config_at(value)
        spec = build_spec(config, sweep.master_seed)
        points.append((value, config, spec, theory_value(config, spec)))
    table = OutputTable()
    for g, (value, config, spec, predicted) in enumerate(points):
        if theory_only:
            table.rows.append((value, np.nan, np.nan, predicted))
            continue
        radius = config.beta_radius if config.resample_beta else None
        est = monte_carlo_risk(spec, sweep.trials, _seed(sweep.master_seed, 2, g), radius, workers)
        table.estimates.append(est)
        table.rows.append((value, est.mean, est.std_error, predicted))
    return table
