"""Selecting synthetic feature vectors to augment a real set.

Covariance matching greedily grows a subset of the pool whose sample
covariance approaches the real one in Frobenius norm.  Alpha matching greedily
minimizes the under-parameterized risk objective instead.  The remaining
selectors are the usual baselines: random, centroid/reference cosine
matching or sampling, k-means representatives and DS3-style cluster retention.

Ties are always broken towards the lowest pool index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from covmatch.errors import DataError, NumericalError, ParameterError
from covmatch.theory import under_objective_batch

METHODS = ("cov_match", "alpha_match", "random", "center_match", "center_sample",
           "kmeans", "ds3", "ref_match", "ref_sample")
BASELINES = METHODS[2:]
DS3_CLUSTERS = 200
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    ids: list[str]
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DataError(f"feature data must be 2-d, got shape {data.shape}")
        ids = [str(i) for i in self.ids]
        if len(ids) != data.shape[0]:
            raise DataError(f"{len(ids)} ids for {data.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise DataError("row ids are not unique")
        if not np.all(np.isfinite(data)):
            raise DataError("feature data has non-finite entries")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data) -> FeatureMatrix:
        data = np.asarray(data, dtype=float)
        return cls([str(i) for i in range(data.shape[0])], data)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.data.shape[0]


def _rows(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        return x.data
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DataError(f"expected a 2-d array of rows, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite feature values")
    return x


@dataclass(frozen=True, eq=False)
class PCAModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def transform(self, x) -> np.ndarray:
        return (_rows(x) - self.mean) @ self.components.T


def fit_pca(reference, k: int) -> PCAModel:
    """Top-``k`` principal directions of the centered reference rows."""
    x = _rows(reference)
    m, d = x.shape
    if int(k) != k or not 1 <= k <= min(m, d):
        raise ParameterError(f"PCA dimension must lie in [1, {min(m, d)}], got {k}")
    k = int(k)
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    if s[0] == 0 or s[k - 1] <= max(m, d) * np.finfo(float).eps * s[0]:
        raise DataError(f"reference set has fewer than {k} directions of nonzero variance")
    return PCAModel(mean, vt[:k].copy(), s[:k] ** 2 / m)


def sample_covariance(rows) -> np.ndarray:
    """Centered covariance with denominator ``m``; a single row gives the zero matrix."""
    x = _rows(rows)
    if x.shape[0] < 1:
        raise DataError("covariance of an empty set")
    centered = x - x.mean(axis=0)
    return centered.T @ centered / x.shape[0]


def covariance_shift(a, b) -> float:
    a, b = _rows(a), _rows(b)
    if a.shape[1] != b.shape[1]:
        raise DataError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return float(np.linalg.norm(sample_covariance(a) - sample_covariance(b)))


def mean_shift(a, b) -> float:
    a, b = _rows(a), _rows(b)
    if a.shape[1] != b.shape[1]:
        raise DataError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))


@dataclass(frozen=True, eq=False)
class SelectionResult:
    indices: np.ndarray
    objective_trace: np.ndarray
    method: str
    seed: int | None = None
    notes: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.indices)


def _check_sizes(real: np.ndarray, pool: np.ndarray, k: int, min_real: int = 1):
    if real.shape[1] != pool.shape[1]:
        raise DataError(f"real and pool dimensions differ: {real.shape[1]} vs {pool.shape[1]}")
    if int(k) != k or k < 1:
        raise ParameterError(f"selection size must be a positive integer, got {k}")
    if pool.shape[0] < k:
        raise DataError(f"pool has {pool.shape[0]} rows, fewer than k={k}")
    if real.shape[0] < min_real:
        raise DataError(f"need at least {min_real} real rows, got {real.shape[0]}")


def _project(real: np.ndarray, pool: np.ndarray, pca_dim):
    """PCA coordinates fit on ``real``; without PCA, both sets are centered at the real mean."""
    if pca_dim is None:
        mean = real.mean(axis=0)
        return real - mean, pool - mean
    model = fit_pca(real, pca_dim)
    return model.transform(real), model.transform(pool)


class _MomentState:
    """Running first and second moments of the selected rows."""

    def __init__(self, d: int):
        self.count = 0
        self.s1 = np.zeros(d)
        self.s2 = np.zeros((d, d))

    def candidate_covariances(self, x: np.ndarray) -> np.ndarray:
        """Covariance of ``S + {x}`` for every row ``x``; shape ``(len(x), d, d)``."""
        m = self.count + 1
        mean = (self.s1 + x) / m
        second = (self.s2 + x[:, :, None] * x[:, None, :]) / m
        return second - mean[:, :, None] * mean[:, None, :]

    def add(self, x: np.ndarray):
        self.count += 1
        self.s1 += x
        self.s2 += np.outer(x, x)


def _greedy(pool: np.ndarray, k: int, score) -> tuple[np.ndarray, np.ndarray]:
    """Generic greedy loop; ``score(state, rows)`` returns one value per candidate row."""
    n = pool.shape[0]
    state = _MomentState(pool.shape[1])
    available = np.ones(n, dtype=bool)
    chosen, trace = [], []
    for _ in range(k):
        values = np.full(n, np.inf)
        idx = np.flatnonzero(available)
        for start in range(0, idx.size, _CHUNK):
            part = idx[start : start + _CHUNK]
            values[part] = score(state, pool[part])
        masked = np.where(available, values, np.inf)
        best = int(np.argmin(masked))
        if not available[best]:
            # every available candidate scored inf; fall back to the lowest available index
            best = int(idx[0])
        chosen.append(best)
        trace.append(values[best])
        available[best] = False
        state.add(pool[best])
    return np.array(chosen, dtype=int), np.array(trace)


def select_cov_match(real, pool, k: int, pca_dim: int | None = 32) -> SelectionResult:
    """Greedy covariance matching: each step adds the row minimizing ``||Cov(S + x) - Cov(real)||_F``."""
    real_x, pool_x = _rows(real), _rows(pool)
    _check_sizes(real_x, pool_x, k, min_real=2)
    real_p, pool_p = _project(real_x, pool_x, pca_dim)
    target = sample_covariance(real_p)

    def score(state, rows):
        diff = state.candidate_covariances(rows) - target
        return np.sqrt(np.einsum("nij,nij->n", diff, diff))

    indices, trace = _greedy(pool_p, int(k), score)
    return SelectionResult(indices, trace, "cov_match")


def _whitener(cov: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root, with one diagonal jitter retry when near-singular."""
    d = cov.shape[0]
    cutoff = d * np.finfo(float).eps
    for attempt in range(2):
        w, v = np.linalg.eigh(cov)
        if w[0] > cutoff * max(w[-1], 0.0) and w[0] > 0:
            return (v / np.sqrt(w)) @ v.T
        if attempt == 0:
            cov = cov + 1e-8 * np.trace(cov) / d * np.eye(d)
    raise NumericalError("real-set covariance is singular even after jitter")


def select_alpha_match(real, pool, k: int, pca_dim: int | None = 32, n_t: int | None = None) -> SelectionResult:
    """Greedy minimization of the under-parameterized risk objective (noise factor dropped).

    At step ``j`` the candidate set ``S + {x}`` has ``j`` rows; the objective is
    evaluated with ``n = n_t + j`` total rows, ``n_s = j`` synthetic ones and
    ``p`` equal to the working dimension.  ``n_t`` defaults to the real set size.
    """
    real_x, pool_x = _rows(real), _rows(pool)
    _check_sizes(real_x, pool_x, k, min_real=2)
    real_p, pool_p = _project(real_x, pool_x, pca_dim)
    d = real_p.shape[1]
    n_t = real_x.shape[0] if n_t is None else int(n_t)
    if n_t < 1 or n_t + 1 <= d:
        raise ParameterError(f"alpha matching needs n_t + 1 > dimension, got n_t={n_t}, d={d}")
    whiten = _whitener(sample_covariance(real_p))

    def score(state, rows):
        j = state.count + 1
        m = whiten @ state.candidate_covariances(rows) @ whiten
        lam = np.clip(np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, 1, 2))), 0.0, None)
        return under_objective_batch(lam, n_t + j, j)

    indices, trace = _greedy(pool_p, int(k), score)
    return SelectionResult(indices, trace, "alpha_match")


# ----------------------------------------------------------------------------
# Baselines
# ----------------------------------------------------------------------------


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def _cosine_to(pool: np.ndarray, direction: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(direction)
    if norm == 0:
        return np.zeros(pool.shape[0])
    return _unit_rows(pool) @ (direction / norm)


def kmeans(x: np.ndarray, n_clusters: int, rng: np.random.Generator, max_iter: int = 100, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are re-seeded at the point farthest from its current center.
    Returns ``(labels, centers)``.
    """
    n = x.shape[0]
    centers = np.empty((n_clusters, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, n_clusters):
        total = closest.sum()
        if total > 0:
            pick = rng.choice(n, p=closest / total)
        else:
            pick = rng.integers(n)
        centers[c] = x[pick]
        closest = np.minimum(closest, np.sum((x - centers[c]) ** 2, axis=1))

    def assign(centers):
        dist = (
            np.sum(x**2, axis=1)[:, None] - 2.0 * x @ centers.T + np.sum(centers**2, axis=1)[None, :]
        )
        labels = np.argmin(dist, axis=1)
        return labels, np.maximum(dist[np.arange(n), labels], 0.0)

    labels, own = assign(centers)
    for _ in range(max_iter):
        new = centers.copy()
        counts = np.bincount(labels, minlength=n_clusters)
        for c in range(n_clusters):
            if counts[c]:
                new[c] = x[labels == c].mean(axis=0)
            else:
                far = int(np.argmax(own))
                new[c] = x[far]
                own[far] = 0.0
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        labels, own = assign(centers)
        if shift <= tol:
            break
    return labels, centers


def select_baseline(
    method: str,
    real,
    pool,
    k: int,
    pca_dim: int | None = None,
    rng_seed: int = 0,
    reference_vector=None,
) -> SelectionResult:
    """Baseline selectors.

    Cosine methods work on raw L2-normalized features.  ``kmeans`` and ``ds3``
    cluster in the PCA space fit on ``real`` when ``pca_dim`` is given, and in
    the raw space otherwise.
    """
    if method not in BASELINES:
        raise ParameterError(f"unknown baseline {method!r}; choose from {', '.join(BASELINES)}")
    real_x, pool_x = _rows(real), _rows(pool)
    _check_sizes(real_x, pool_x, k)
    k = int(k)
    n = pool_x.shape[0]
    rng = np.random.default_rng(rng_seed)

    if method in ("ref_match", "ref_sample"):
        if reference_vector is None:
            raise ParameterError(f"{method} needs a reference vector")
        direction = np.asarray(reference_vector, dtype=float).ravel()
        if direction.shape != (pool_x.shape[1],) or not np.all(np.isfinite(direction)):
            raise DataError("reference vector has the wrong length or non-finite entries")
    else:
        direction = _unit_rows(real_x).mean(axis=0)

    if method == "random":
        indices = rng.choice(n, size=k, replace=False)
        return SelectionResult(indices, np.full(k, np.nan), method, rng_seed)

    if method in ("center_match", "ref_match"):
        cos = _cosine_to(pool_x, direction)
        indices = np.argsort(-cos, kind="stable")[:k]
        return SelectionResult(indices, cos[indices], method, rng_seed)

    if method in ("center_sample", "ref_sample"):
        cos = _cosine_to(pool_x, direction)
        weights = np.maximum(cos, 0.0) + 1e-12
        indices = rng.choice(n, size=k, replace=False, p=weights / weights.sum())
        return SelectionResult(indices, cos[indices], method, rng_seed)

    real_c, pool_c = (real_x, pool_x) if pca_dim is None else _project(real_x, pool_x, pca_dim)

    if method == "kmeans":
        labels, _ = kmeans(pool_c, k, rng)
        chosen = []
        for c in range(k):
            members = np.flatnonzero(labels == c)
            if members.size:
                chosen.append(int(rng.choice(members)))
        if len(chosen) < k:
            rest = np.setdiff1d(np.arange(n), chosen)
            chosen.extend(rng.choice(rest, size=k - len(chosen), replace=False).tolist())
        indices = np.array(chosen, dtype=int)
        return SelectionResult(indices, np.full(k, np.nan), method, rng_seed)

    # ds3
    n_clusters = min(DS3_CLUSTERS, n)
    labels, centers = kmeans(pool_c, n_clusters, rng)
    dist = np.sum(real_c**2, axis=1)[:, None] - 2.0 * real_c @ centers.T + np.sum(centers**2, axis=1)
    retained = np.unique(np.argmin(dist, axis=1))
    members = np.flatnonzero(np.isin(labels, retained))
    if members.size >= k:
        indices = rng.choice(members, size=k, replace=False)
    else:
        rest = np.setdiff1d(np.arange(n), members)
        fill = rng.choice(rest, size=k - members.size, replace=False)
        indices = np.concatenate([rng.permutation(members), fill])
    return SelectionResult(
        indices.astype(int), np.full(k, np.nan), method, rng_seed,
        notes={"retained_clusters": retained.size, "retained_rows": members.size},
    )


def select(method: str, real, pool, k: int, pca_dim: int | None = 32, rng_seed: int = 0,
           reference_vector=None, n_t: int | None = None) -> SelectionResult:
    """Dispatch to any selector by name."""
    if method == "cov_match":
        return select_cov_match(real, pool, k, pca_dim)
    if method == "alpha_match":
        return select_alpha_match(real, pool, k, pca_dim, n_t)
    return select_baseline(method, real, pool, k, pca_dim, rng_seed, reference_vector)
