"""Zero-mean Gaussian process regression on top of :mod:`intbo.kernel`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .kernel import (
    KernelConfig,
    covariance_from_sq_dist,
    effective_inputs,
    gram,
    jittered_cholesky,
    kernel_matrix,
)
from .space import CapacityError, DEFAULT_GRID_CAP, SearchSpace

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    def append(self, x: np.ndarray, y: float) -> "Dataset":
        return Dataset(np.vstack([self.X, np.asarray(x, dtype=float)[None, :]]), np.append(self.y, y))


class PredictiveDistribution(NamedTuple):
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True)
class GpPosterior:
    """Factored GP conditioned on a dataset.

    ``chol`` is the lower factor of ``K + (noise + jitter) I`` and
    ``alpha`` solves that system against ``y``.
    """

    dataset: Dataset
    cfg: KernelConfig
    space: SearchSpace
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float

    def predict_many(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Latent mean and variance at each row of ``Xs``."""
        Ks = kernel_matrix(self.cfg, self.space, self.dataset.X, Xs)
        mean = Ks.T @ self.alpha
        v = solve_triangular(self.chol, Ks, lower=True, check_finite=False)
        var = self.cfg.signal_variance - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def predict(self, x: np.ndarray) -> PredictiveDistribution:
        mean, var = self.predict_many(np.asarray(x, dtype=float)[None, :])
        return PredictiveDistribution(float(mean[0]), float(var[0]))


def _factor(cfg: KernelConfig, K: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Cholesky factor, alpha and jitter for a noise-free Gram ``K`` (modified)."""
    K[np.diag_indices_from(K)] += cfg.noise_variance
    L, jitter = jittered_cholesky(K, cfg.signal_variance)
    tmp = solve_triangular(L, y, lower=True, check_finite=False)
    alpha = solve_triangular(L.T, tmp, lower=False, check_finite=False)
    return L, alpha, jitter


def fit(cfg: KernelConfig, space: SearchSpace, data: Dataset) -> GpPosterior:
    if len(data) < 1:
        raise ValueError("cannot fit a GP to an empty dataset")
    L, alpha, jitter = _factor(cfg, gram(cfg, space, data.X, include_noise=False), data.y)
    return GpPosterior(data, cfg, space, L, alpha, jitter)


def predict(post: GpPosterior, x: np.ndarray) -> PredictiveDistribution:
    return post.predict(x)


def log_marginal_likelihood(cfg: KernelConfig, space: SearchSpace, data: Dataset) -> float:
    if len(data) < 1:
        raise ValueError("cannot evaluate the evidence of an empty dataset")
    return lml_from_gram(cfg, gram(cfg, space, data.X, include_noise=False), data.y)


def lml_from_gram(cfg: KernelConfig, K: np.ndarray, y: np.ndarray) -> float:
    """Log evidence given the noise-free Gram matrix ``K`` (overwritten)."""
    K[np.diag_indices_from(K)] += cfg.noise_variance
    L, _ = jittered_cholesky(K, cfg.signal_variance)
    w = solve_triangular(L, y, lower=True, check_finite=False)
    return float(-0.5 * w @ w - np.log(np.diag(L)).sum() - 0.5 * y.shape[0] * LOG_2PI)


def predict_stack(posts: Sequence[GpPosterior], Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances, shape (len(posts), len(Xs)), for posteriors on one dataset.

    Posteriors that share inputs, kernel family and transform flag reuse
    a single set of input differences.
    """
    first = posts[0]
    shared = all(
        p.dataset.X is first.dataset.X
        and p.cfg.family is first.cfg.family
        and p.cfg.integer_transform == first.cfg.integer_transform
        for p in posts
    )
    if not shared:
        pairs = [p.predict_many(Xs) for p in posts]
        return np.array([m for m, _ in pairs]), np.array([v for _, v in pairs])
    A = effective_inputs(first.cfg, first.space, first.dataset.X)
    B = effective_inputs(first.cfg, first.space, Xs)
    diff = A[None, :, :] - B[:, None, :]
    diff *= diff
    inv_ls2 = np.array([np.reciprocal(np.square(p.cfg.lengthscales)) for p in posts]).T
    r2 = diff @ inv_ls2  # (m, n, S)
    amp2 = np.array([p.cfg.signal_variance for p in posts])
    K = covariance_from_sq_dist(first.cfg.family, r2, amp2)
    means = np.empty((len(posts), B.shape[0]))
    variances = np.empty_like(means)
    for s, p in enumerate(posts):
        Ks = K[:, :, s].T
        means[s] = Ks.T @ p.alpha
        v = solve_triangular(p.chol, Ks, lower=True, check_finite=False)
        variances[s] = amp2[s] - np.einsum("ij,ij->j", v, v)
    return means, np.maximum(variances, 0.0)


def sample_prior_on_grid(
    cfg: KernelConfig,
    space: SearchSpace,
    grid: np.ndarray,
    rng: np.random.Generator,
    cap: int = DEFAULT_GRID_CAP,
) -> np.ndarray:
    """One joint draw of the noise-free GP prior at the grid rows.

    Rows that the kernel cannot tell apart (same point after rounding)
    are drawn once and share the value exactly.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] < 1:
        raise ValueError("grid must be nonempty")
    if grid.shape[0] > cap:
        raise CapacityError(f"grid of {grid.shape[0]} points exceeds cap {cap}")
    effective = effective_inputs(cfg, space, grid)
    unique, inverse = np.unique(effective, axis=0, return_inverse=True)
    K = gram(cfg, space, unique, include_noise=False)
    L, _ = jittered_cholesky(K, cfg.signal_variance)
    del K
    z = rng.standard_normal(unique.shape[0])
    return (L @ z)[inverse.reshape(-1)]


def standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Centre and scale targets; a constant vector keeps unit scale."""
    y = np.asarray(y, dtype=float)
    mu = float(y.mean())
    sd = float(y.std())
    if not np.isfinite(sd) or sd <= 1e-12:
        sd = 1.0
    return (y - mu) / sd, mu, sd
