"""The Bayesian optimization loop for mixed continuous/integer problems."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import gp
from .acquisition import AcquisitionContext, Strategy, maximize_acquisition, multistart_maximize
from .gp import Dataset, GpPosterior, predict_stack
from .inference import HyperPrior, HyperSample, slice_sample
from .kernel import ConditioningError, KernelConfig, KernelFamily
from .space import SearchSpace

log = logging.getLogger(__name__)

NOISELESS_VARIANCE = 1e-6

Objective = Callable[[np.ndarray], float]


class ObjectiveError(RuntimeError):
    """The objective failed; ``records`` holds everything completed before it."""

    def __init__(self, message: str, records: list["TrialRecord"]):
        super().__init__(message)
        self.records = records


class ReplayMismatchError(RuntimeError):
    """A replayed record does not match the point the run would evaluate."""


@dataclass(frozen=True)
class InferenceSettings:
    n_samples: int = 10
    burn_in_first: int = 20
    burn_in: int = 5
    width: float = 1.0


@dataclass
class BoConfig:
    """Everything one optimization run needs.

    ``noise_variance`` is the known observation noise in objective units;
    ``0.0`` means noiseless (a fixed ``1e-6`` is used on the standardized
    scale) and ``None`` means the noise level is inferred.
    """

    space: SearchSpace
    objective: Objective
    strategy: Strategy = Strategy.PROPOSED
    n_initial: int = 3
    n_iterations: int = 10
    seed: int | Sequence[int] = 0
    kernel_family: KernelFamily = KernelFamily.MATERN52
    noise_variance: float | None = 0.0
    inference: InferenceSettings = field(default_factory=InferenceSettings)
    n_candidates: int = 1000
    n_starts: int = 5

    def __post_init__(self) -> None:
        self.strategy = Strategy(self.strategy)
        self.kernel_family = KernelFamily(self.kernel_family)
        if self.n_initial < 2:
            raise ValueError("n_initial must be >= 2")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.noise_variance is not None and self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    def prior(self) -> HyperPrior:
        return HyperPrior.default(self.space, infer_noise=self.noise_variance is None)


@dataclass(frozen=True)
class TrialRecord:
    iteration: int
    suggested: tuple[float, ...]
    evaluated: tuple[float, ...]
    observed: float
    incumbent_after: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "suggested": list(self.suggested),
            "evaluated": list(self.evaluated),
            "observed": self.observed,
            "incumbent_after": self.incumbent_after,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(
            int(d["iteration"]),
            tuple(float(v) for v in d["suggested"]),
            tuple(float(v) for v in d["evaluated"]),
            float(d["observed"]),
            float(d["incumbent_after"]),
        )


def storage_point(strategy: Strategy, space: SearchSpace, suggested: np.ndarray) -> np.ndarray:
    """Point recorded in the dataset for a given suggestion."""
    if Strategy(strategy) is Strategy.NAIVE:
        return space.transform(suggested)
    return np.array(suggested, dtype=float)


def model_noise(cfg: BoConfig, scale: float) -> float:
    if cfg.noise_variance is None:
        return 1e-2
    if cfg.noise_variance == 0:
        return NOISELESS_VARIANCE
    return cfg.noise_variance / scale**2


def initial_kernel(cfg: BoConfig, noise_variance: float) -> KernelConfig:
    prior = cfg.prior()
    return KernelConfig(
        cfg.kernel_family,
        tuple(float(np.exp(p.log_mean)) for p in prior.lengthscales),
        amplitude=1.0,
        noise_variance=noise_variance,
        integer_transform=cfg.strategy.transforms_kernel,
    )


def fit_posteriors(space: SearchSpace, data: Dataset, hypers: Sequence[HyperSample]) -> list[GpPosterior]:
    posts = []
    for h in hypers:
        try:
            posts.append(gp.fit(h, space, data))
        except ConditioningError:
            log.warning("skipping ill-conditioned hyperparameter sample %s", h)
    if not posts:
        raise ConditioningError("no hyperparameter sample gave a usable fit", float("nan"))
    return posts


def suggest_next(
    cfg: BoConfig,
    data: Dataset,
    hypers: Sequence[HyperSample],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Maximize averaged EI; return the suggestion and the point to store.

    The objective is always evaluated at ``space.transform(suggested)``.
    """
    if len(data) < 1:
        raise ValueError("need at least one observation")
    ctx = AcquisitionContext(fit_posteriors(cfg.space, data, hypers), float(data.y.min()), cfg.strategy)
    suggested = maximize_acquisition(ctx, cfg.space, rng, cfg.n_candidates, cfg.n_starts)
    return suggested, storage_point(cfg.strategy, cfg.space, suggested)


def recommend(
    cfg: BoConfig,
    data: Dataset,
    hypers: Sequence[HyperSample],
    rng: np.random.Generator,
) -> np.ndarray:
    """Minimizer of the averaged posterior mean, rounded into the domain."""
    posts = fit_posteriors(cfg.space, data, hypers)
    transform_first = cfg.strategy.transforms_kernel

    def neg_mean(X: np.ndarray) -> np.ndarray:
        if transform_first:
            X = cfg.space.transform(X)
        return -predict_stack(posts, X)[0].mean(axis=0)

    x, _ = multistart_maximize(
        neg_mean, cfg.space, rng, transform_first, cfg.n_candidates, cfg.n_starts
    )
    return cfg.space.transform(x)


class _HyperChain:
    """Warm-started slice sampling chain kept across iterations."""

    def __init__(self, cfg: BoConfig):
        self.cfg = cfg
        self.prior = cfg.prior()
        self.state: KernelConfig | None = None

    def sample(self, data: Dataset, noise_variance: float, rng: np.random.Generator) -> list[HyperSample]:
        settings = self.cfg.inference
        if self.state is None:
            init, burn_in = initial_kernel(self.cfg, noise_variance), settings.burn_in_first
        else:
            init, burn_in = self.state, settings.burn_in
            if not self.prior.infers_noise:
                init = init.with_(noise_variance=noise_variance)
        samples = slice_sample(
            self.prior, self.cfg.space, data, init, settings.n_samples, burn_in, rng, settings.width
        )
        self.state = samples[-1]
        return samples


def run_bo(
    cfg: BoConfig,
    replay: Sequence[TrialRecord] = (),
    on_record: Callable[[TrialRecord], None] | None = None,
) -> list[TrialRecord]:
    """Run the full loop: random initial design, then model-guided steps.

    Records in ``replay`` stand in for objective calls, in order, so an
    interrupted run resumes with identical suggestions. ``on_record`` is
    called for each newly evaluated record only.
    """
    space = cfg.space
    rng = np.random.default_rng(cfg.seed)
    records: list[TrialRecord] = []
    stored_X: list[np.ndarray] = []
    observed: list[float] = []

    def evaluate(suggested: np.ndarray, storage: np.ndarray) -> None:
        k = len(records)
        evaluated = space.transform(suggested)
        if k < len(replay):
            rec = replay[k]
            if not np.allclose(rec.evaluated, evaluated, rtol=0, atol=1e-9):
                raise ReplayMismatchError(
                    f"record {k}: stored point {rec.evaluated} != expected {tuple(evaluated)}"
                )
            y = rec.observed
        else:
            try:
                y = float(cfg.objective(evaluated))
            except Exception as exc:
                raise ObjectiveError(f"objective failed at record {k}: {exc}", list(records)) from exc
            if not np.isfinite(y):
                raise ObjectiveError(f"objective returned non-finite value {y} at record {k}", list(records))
        incumbent = min(observed + [y])
        rec = TrialRecord(k, tuple(map(float, suggested)), tuple(map(float, evaluated)), y, incumbent)
        records.append(rec)
        stored_X.append(np.asarray(storage, dtype=float))
        observed.append(y)
        if on_record is not None and k >= len(replay):
            on_record(rec)

    for x in space.sample_uniform(rng, cfg.n_initial):
        evaluate(x, x)

    chain = _HyperChain(cfg)
    for _ in range(cfg.n_iterations):
        z, _, scale = gp.standardize(np.array(observed))
        data = Dataset(np.array(stored_X), z)
        hypers = chain.sample(data, model_noise(cfg, scale), rng)
        suggested, storage = suggest_next(cfg, data, hypers, rng)
        evaluate(suggested, storage)
    return records


def count_duplicates(records: Sequence[TrialRecord], space: SearchSpace, n_initial: int) -> int:
    """Model-guided evaluations that repeat an earlier point while unseen cells remain.

    Only meaningful on pure-integer spaces, where the number of cells is
    finite; once every cell has been evaluated, repeats are unavoidable
    and not counted.
    """
    if not space.integer_mask.all():
        raise ValueError("duplicate counting needs a pure-integer space")
    n_cells = int(np.prod(space.widths + 1))
    seen: set[tuple[float, ...]] = set()
    dups = 0
    for i, rec in enumerate(records):
        if i >= n_initial and rec.evaluated in seen and len(seen) < n_cells:
            dups += 1
        seen.add(rec.evaluated)
    return dups
