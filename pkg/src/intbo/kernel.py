"""Stationary ARD covariance functions with optional integer rounding of inputs.

With ``integer_transform`` switched on the covariance becomes
``k(T(x), T(x'))`` where ``T`` rounds the integer coordinates, so the
resulting GP is constant on every set of inputs that round together.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, LinAlgError

from .space import DimensionMismatchError, SearchSpace

JITTER_START = 1e-10
JITTER_MAX = 1e-4
SQRT5 = np.sqrt(5.0)


class ConditioningError(np.linalg.LinAlgError):
    """Cholesky failed even with the largest allowed jitter."""

    def __init__(self, message: str, jitter: float):
        super().__init__(message)
        self.jitter = jitter


class KernelFamily(str, Enum):
    MATERN52 = "matern52"
    SQUARED_EXPONENTIAL = "squared_exponential"


@dataclass(frozen=True)
class KernelConfig:
    family: KernelFamily
    lengthscales: tuple[float, ...]
    amplitude: float = 1.0
    noise_variance: float = 0.0
    integer_transform: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", KernelFamily(self.family))
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if not ls or not all(v > 0 and np.isfinite(v) for v in ls):
            raise ValueError(f"lengthscales must be positive and finite, got {ls}")
        if not (self.amplitude > 0 and np.isfinite(self.amplitude)):
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if not (self.noise_variance >= 0 and np.isfinite(self.noise_variance)):
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")

    def with_(self, **changes) -> "KernelConfig":
        return replace(self, **changes)

    @property
    def signal_variance(self) -> float:
        return self.amplitude**2


def _effective(cfg: KernelConfig, space: SearchSpace, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != space.dimension or len(cfg.lengthscales) != space.dimension:
        raise DimensionMismatchError(
            f"space has {space.dimension} dims, points have {X.shape[-1]}, "
            f"kernel has {len(cfg.lengthscales)} lengthscales"
        )
    return space.transform(X) if cfg.integer_transform else X


def _from_sq_dist(cfg: KernelConfig, r2: np.ndarray) -> np.ndarray:
    return covariance_from_sq_dist(cfg.family, r2, cfg.signal_variance)


def covariance_from_sq_dist(family: KernelFamily, r2: np.ndarray, amp2: float | np.ndarray = 1.0) -> np.ndarray:
    """Map scaled squared distances to covariances, overwriting ``r2``."""
    if family is KernelFamily.SQUARED_EXPONENTIAL:
        r2 *= -0.5
        np.exp(r2, out=r2)
        r2 *= amp2
        return r2
    r = np.sqrt(r2)
    r *= SQRT5
    # (1 + s + s^2/3) exp(-s) with s = sqrt(5) r
    out = r * r
    out /= 3.0
    out += r
    out += 1.0
    np.negative(r, out=r)
    np.exp(r, out=r)
    out *= r
    out *= amp2
    return out


def _sq_dist(cfg: KernelConfig, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[0] * B.shape[0] * A.shape[1] <= 1_000_000:
        diff = A[:, None, :] - B[None, :, :]
        diff /= cfg.lengthscales
        diff *= diff
        return diff.sum(axis=2)
    # row-by-dimension accumulation keeps memory at one n x m array for big grids
    r2 = np.zeros((A.shape[0], B.shape[0]))
    for d, ell in enumerate(cfg.lengthscales):
        diff = np.subtract.outer(A[:, d], B[:, d])
        diff /= ell
        diff *= diff
        r2 += diff
    return r2


def kernel_matrix(cfg: KernelConfig, space: SearchSpace, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Noise-free covariance between two row stacks of points."""
    A = _effective(cfg, space, np.atleast_2d(A))
    B = _effective(cfg, space, np.atleast_2d(B))
    return _from_sq_dist(cfg, _sq_dist(cfg, A, B))


def effective_inputs(cfg: KernelConfig, space: SearchSpace, X: np.ndarray) -> np.ndarray:
    """Inputs as the kernel sees them (rounded when the transform is on)."""
    return _effective(cfg, space, np.atleast_2d(X))


def kernel_eval(cfg: KernelConfig, space: SearchSpace, x: Sequence[float], x2: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != (space.dimension,) or x2.shape != (space.dimension,):
        raise DimensionMismatchError(f"expected two points of dimension {space.dimension}")
    return float(kernel_matrix(cfg, space, x[None, :], x2[None, :])[0, 0])


def pairwise_sq_diffs(cfg: KernelConfig, space: SearchSpace, X: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences of effective inputs, shape (d, n, n).

    Scaling by inverse squared lengthscales and summing over the first
    axis gives the scaled squared distances for any lengthscale setting.
    """
    Xe = _effective(cfg, space, np.atleast_2d(np.asarray(X, dtype=float)))
    diff = Xe.T[:, :, None] - Xe.T[:, None, :]
    diff *= diff
    return diff


def base_jitter(cfg: KernelConfig) -> float:
    return JITTER_START * cfg.signal_variance


def gram(
    cfg: KernelConfig,
    space: SearchSpace,
    X: np.ndarray,
    include_noise: bool,
    jitter: float | None = None,
) -> np.ndarray:
    """Prior covariance among the rows of ``X``.

    With ``include_noise`` the diagonal is inflated by the noise variance
    plus ``jitter`` (default ``1e-10 * amplitude**2``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xe = _effective(cfg, space, X)
    K = _from_sq_dist(cfg, _sq_dist(cfg, Xe, Xe))
    if include_noise:
        K[np.diag_indices_from(K)] += cfg.noise_variance + (base_jitter(cfg) if jitter is None else jitter)
    return K


def cross_covariance(cfg: KernelConfig, space: SearchSpace, X: np.ndarray, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (space.dimension,):
        raise DimensionMismatchError(f"expected a point of dimension {space.dimension}")
    return kernel_matrix(cfg, space, X, x[None, :])[:, 0]


def jittered_cholesky(K: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + jitter*I`` under the escalation policy.

    Jitter starts at ``1e-10 * scale`` and grows tenfold up to
    ``1e-4 * scale``. ``K`` must not already contain jitter.
    Returns the factor and the jitter that succeeded.
    """
    jitter = JITTER_START * scale
    limit = JITTER_MAX * scale * (1 + 1e-9)
    diag = np.diag_indices_from(K)
    while True:
        Kj = K.copy()
        Kj[diag] += jitter
        try:
            return cholesky(Kj, lower=True, check_finite=False, overwrite_a=True), jitter
        except LinAlgError:
            pass
        if jitter * 10 > limit:
            raise ConditioningError(f"Cholesky failed with jitter {jitter:.3g}", jitter)
        jitter *= 10
