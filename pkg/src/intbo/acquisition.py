"""Expected improvement and its multistart maximization."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .gp import GpPosterior, predict_stack
from .space import SearchSpace

STD_FLOOR = 1e-12
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Strategy(str, Enum):
    """How integer-valued variables are handled by the optimizer.

    NAIVE optimizes the relaxed problem and stores the rounded point,
    BASIC rounds only inside the objective wrapper, PROPOSED also rounds
    the kernel inputs.
    """

    NAIVE = "naive"
    BASIC = "basic"
    PROPOSED = "proposed"

    @property
    def transforms_kernel(self) -> bool:
        return self is Strategy.PROPOSED


def expected_improvement(mean, std, incumbent):
    """EI for minimization, ``sigma * (gamma * Phi(gamma) + phi(gamma))``.

    Falls back to ``max(0, incumbent - mean)`` where ``std < 1e-12``.
    Accepts scalars or arrays.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improvement = incumbent - mean
    safe = std >= STD_FLOOR
    sd = np.where(safe, std, 1.0)
    gamma = improvement / sd
    ei = sd * (gamma * ndtr(gamma) + INV_SQRT_2PI * np.exp(-0.5 * gamma * gamma))
    ei = np.where(safe, np.maximum(ei, 0.0), np.maximum(improvement, 0.0))
    return float(ei) if ei.ndim == 0 else ei


@dataclass(frozen=True)
class AcquisitionContext:
    posteriors: Sequence[GpPosterior]
    incumbent: float
    strategy: Strategy

    def __post_init__(self) -> None:
        if not self.posteriors:
            raise ValueError("need at least one posterior")
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    @property
    def space(self) -> SearchSpace:
        return self.posteriors[0].space

    def effective(self, X: np.ndarray) -> np.ndarray:
        return self.space.transform(X) if self.strategy.transforms_kernel else X


def acquisition_values(ctx: AcquisitionContext, X: np.ndarray) -> np.ndarray:
    """Hyperparameter-averaged EI at each row of ``X``."""
    X = ctx.effective(np.atleast_2d(X))
    means, variances = predict_stack(ctx.posteriors, X)
    ei = expected_improvement(means, np.sqrt(variances), ctx.incumbent)
    return ei.mean(axis=0)


def acquisition_value(ctx: AcquisitionContext, x: np.ndarray) -> float:
    return float(acquisition_values(ctx, np.asarray(x, dtype=float)[None, :])[0])


def local_search(
    score: Callable[[np.ndarray], np.ndarray],
    space: SearchSpace,
    x0: np.ndarray,
    f0: float,
    integer_moves: bool,
    initial_step: float = 0.1,
    final_step: float = 1e-4,
    max_moves: int = 500,
) -> tuple[np.ndarray, float]:
    """Derivative-free coordinate ascent with step halving.

    Each round scores every +/- step move (steps are fractions of the
    variable width) and takes the best strict improvement; a round with
    no improvement halves the step. With ``integer_moves`` the integer
    coordinates move by +/-1 instead of by fractional steps.
    """
    x = np.array(x0, dtype=float)
    f = f0
    widths = space.widths
    cont = np.flatnonzero(~space.integer_mask if integer_moves else np.ones(space.dimension, bool))
    ints = np.flatnonzero(space.integer_mask) if integer_moves else np.array([], dtype=int)
    step = initial_step
    moves = 0
    while step >= final_step and moves < max_moves:
        deltas = []
        for d in cont:
            for sign in (1.0, -1.0):
                e = np.zeros(space.dimension)
                e[d] = sign * step * widths[d]
                deltas.append(e)
        for d in ints:
            for sign in (1.0, -1.0):
                e = np.zeros(space.dimension)
                e[d] = sign
                deltas.append(e)
        if not deltas:
            break
        cand = space.clamp(x + np.array(deltas))
        vals = score(cand)
        best = int(np.argmax(vals))
        if vals[best] > f:
            x, f = cand[best], float(vals[best])
            moves += 1
        else:
            step *= 0.5
    return x, f


def multistart_maximize(
    score: Callable[[np.ndarray], np.ndarray],
    space: SearchSpace,
    rng: np.random.Generator,
    integer_moves: bool,
    n_candidates: int = 1000,
    n_starts: int = 5,
) -> tuple[np.ndarray, float]:
    """Random screening followed by local refinement of the best starts.

    Candidates are drawn uniformly over the relaxed box. Ties between
    refined points go to the earlier start.
    """
    lower, widths = space.lower, space.widths
    cand = lower + rng.random((n_candidates, space.dimension)) * widths
    vals = score(cand)
    order = np.argsort(-vals, kind="stable")[:n_starts]
    best_x, best_f = None, -np.inf
    for i in order:
        x, f = local_search(score, space, cand[i], float(vals[i]), integer_moves)
        if f > best_f:
            best_x, best_f = x, f
    return best_x, best_f


def maximize_acquisition(
    ctx: AcquisitionContext,
    space: SearchSpace,
    rng: np.random.Generator,
    n_candidates: int = 1000,
    n_starts: int = 5,
) -> np.ndarray:
    x, _ = multistart_maximize(
        lambda X: acquisition_values(ctx, X),
        space,
        rng,
        integer_moves=ctx.strategy.transforms_kernel,
        n_candidates=n_candidates,
        n_starts=n_starts,
    )
    return x
