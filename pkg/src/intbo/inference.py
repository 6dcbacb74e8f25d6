"""Slice sampling of kernel hyperparameters.

Hyperparameters are sampled coordinate-wise in log space with the
step-out/shrinkage univariate slice sampler. Each coordinate carries an
independent log-normal prior, which is a plain normal density on the
log-scale coordinate the sampler moves along.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .gp import LOG_2PI, Dataset, log_marginal_likelihood
from .kernel import KernelConfig, covariance_from_sq_dist, jittered_cholesky, pairwise_sq_diffs
from .space import SearchSpace

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
MAX_SHRINK = 1000
MAX_STEP_OUT = 50


class SamplerStuckError(RuntimeError):
    """The shrinkage loop rejected every proposal up to the iteration cap."""


@dataclass(frozen=True)
class LogNormal:
    log_mean: float
    log_std: float

    def __post_init__(self) -> None:
        if not self.log_std > 0:
            raise ValueError(f"log_std must be positive, got {self.log_std}")

    def logpdf(self, value: float) -> float:
        z = (np.log(value) - self.log_mean) / self.log_std
        return float(-0.5 * z * z - np.log(value * self.log_std) - LOG_SQRT_2PI)

    def logpdf_log(self, log_value: float) -> float:
        """Density of ``log(value)``, i.e. a normal in log space."""
        z = (log_value - self.log_mean) / self.log_std
        return float(-0.5 * z * z - np.log(self.log_std) - LOG_SQRT_2PI)


@dataclass(frozen=True)
class HyperPrior:
    """Independent log-normal priors on lengthscales, amplitude and noise std.

    ``noise`` is ``None`` when the noise variance is held fixed.
    """

    lengthscales: tuple[LogNormal, ...]
    amplitude: LogNormal = field(default_factory=lambda: LogNormal(0.0, 1.0))
    noise: LogNormal | None = None

    @classmethod
    def default(cls, space: SearchSpace, infer_noise: bool = False) -> "HyperPrior":
        # integer variables with a single value get a unit scale
        widths = np.where(space.widths > 0, space.widths, 1.0)
        ls = tuple(LogNormal(float(np.log(0.5 * w)), 1.0) for w in widths)
        noise = LogNormal(float(np.log(0.01)), 1.0) if infer_noise else None
        return cls(ls, LogNormal(0.0, 1.0), noise)

    @property
    def infers_noise(self) -> bool:
        return self.noise is not None

    def n_params(self) -> int:
        return len(self.lengthscales) + 1 + int(self.infers_noise)

    def pack(self, cfg: KernelConfig) -> np.ndarray:
        """Log-space coordinate vector for ``cfg``."""
        theta = list(np.log(cfg.lengthscales)) + [np.log(cfg.amplitude)]
        if self.infers_noise:
            theta.append(0.5 * np.log(cfg.noise_variance))
        return np.array(theta)

    def unpack(self, theta: np.ndarray, template: KernelConfig) -> KernelConfig:
        d = len(self.lengthscales)
        changes = {
            "lengthscales": tuple(np.exp(theta[:d])),
            "amplitude": float(np.exp(theta[d])),
        }
        if self.infers_noise:
            changes["noise_variance"] = float(np.exp(2.0 * theta[d + 1]))
        return template.with_(**changes)

    def log_density(self, cfg: KernelConfig) -> float:
        total = sum(p.logpdf(v) for p, v in zip(self.lengthscales, cfg.lengthscales))
        total += self.amplitude.logpdf(cfg.amplitude)
        if self.infers_noise:
            total += self.noise.logpdf(np.sqrt(cfg.noise_variance))
        return total

    def log_density_log_space(self, theta: np.ndarray) -> float:
        d = len(self.lengthscales)
        total = sum(p.logpdf_log(t) for p, t in zip(self.lengthscales, theta[:d]))
        total += self.amplitude.logpdf_log(theta[d])
        if self.infers_noise:
            total += self.noise.logpdf_log(theta[d + 1])
        return total


HyperSample = KernelConfig


def _check_positive(cfg: KernelConfig) -> None:
    if any(v <= 0 for v in cfg.lengthscales) or cfg.amplitude <= 0 or cfg.noise_variance < 0:
        raise ValueError("hyperparameters violate positivity")


def log_posterior(prior: HyperPrior, cfg: KernelConfig, space: SearchSpace, data: Dataset) -> float:
    """Log marginal likelihood plus log prior density at ``cfg``.

    An ill-conditioned Gram matrix yields ``-inf`` instead of raising.
    """
    _check_positive(cfg)
    if prior.infers_noise and cfg.noise_variance <= 0:
        return -np.inf
    try:
        lml = log_marginal_likelihood(cfg, space, data)
    except np.linalg.LinAlgError:
        return -np.inf
    if not np.isfinite(lml):
        return -np.inf
    return lml + prior.log_density(cfg)


def slice_sweeps(
    log_density: Callable[[np.ndarray], float],
    x0: np.ndarray,
    n_samples: int,
    burn_in: int,
    rng: np.random.Generator,
    width: float | np.ndarray = 1.0,
) -> np.ndarray:
    """Coordinate-wise slice sampling of an arbitrary log density.

    Every sweep updates each coordinate once, in order. The first
    ``burn_in`` sweeps are discarded and each later sweep yields one row.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = np.array(x0, dtype=float)
    widths = np.broadcast_to(np.asarray(width, dtype=float), x.shape)
    logp = log_density(x)
    if not np.isfinite(logp):
        raise ValueError("initial point has zero density")
    out = np.empty((n_samples, x.size))
    for sweep in range(burn_in + n_samples):
        for d in range(x.size):
            x, logp = _slice_1d(log_density, x, logp, d, widths[d], rng)
        if sweep >= burn_in:
            out[sweep - burn_in] = x
    return out


def _slice_1d(log_density, x, logp, d, w, rng):
    level = logp + np.log(rng.random())
    x0 = x[d]
    left = x0 - w * rng.random()
    right = left + w
    probe = x.copy()

    def at(value):
        probe[d] = value
        return log_density(probe)

    for _ in range(MAX_STEP_OUT):
        if at(left) <= level:
            break
        left -= w
    for _ in range(MAX_STEP_OUT):
        if at(right) <= level:
            break
        right += w
    for _ in range(MAX_SHRINK):
        candidate = left + (right - left) * rng.random()
        lp = at(candidate)
        if lp > level:
            probe[d] = candidate
            return probe, lp
        if candidate < x0:
            left = candidate
        else:
            right = candidate
    raise SamplerStuckError(f"no acceptable proposal on coordinate {d} after {MAX_SHRINK} shrinks")


def slice_sample(
    prior: HyperPrior,
    space: SearchSpace,
    data: Dataset,
    init: KernelConfig,
    n_samples: int,
    burn_in: int,
    rng: np.random.Generator,
    width: float = 1.0,
) -> list[HyperSample]:
    """Posterior draws of the kernel hyperparameters given ``data``."""
    _check_positive(init)

    sq_diffs = pairwise_sq_diffs(init, space, data.X)
    d = len(prior.lengthscales)
    priors = list(prior.lengthscales) + [prior.amplitude] + ([prior.noise] if prior.infers_noise else [])
    log_means = np.array([p.log_mean for p in priors])
    log_stds = np.array([p.log_std for p in priors])
    prior_const = -np.log(log_stds).sum() - LOG_SQRT_2PI * len(priors)
    y = data.y
    n = y.shape[0]
    diag = np.diag_indices(n)

    # the sampler moves in log space, so the target carries the log-Jacobian:
    # log-normal priors become normal densities on theta
    def target(theta: np.ndarray) -> float:
        if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > 50):
            return -np.inf
        amp2 = np.exp(2.0 * theta[d])
        noise = np.exp(2.0 * theta[d + 1]) if prior.infers_noise else init.noise_variance
        K = covariance_from_sq_dist(init.family, np.tensordot(np.exp(-2.0 * theta[:d]), sq_diffs, axes=1), amp2)
        K[diag] += noise
        try:
            L, _ = jittered_cholesky(K, amp2)
        except np.linalg.LinAlgError:
            return -np.inf
        w = solve_triangular(L, y, lower=True, check_finite=False)
        lml = -0.5 * w @ w - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI
        z = (theta - log_means) / log_stds
        return float(lml - 0.5 * z @ z + prior_const)

    theta0 = prior.pack(init)
    rows = slice_sweeps(target, theta0, n_samples, burn_in, rng, width)
    return [prior.unpack(row, init) for row in rows]
