"""Synthetic benchmark harness: sampled objectives, paired runs, regret curves."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import gp
from .acquisition import Strategy
from .driver import BoConfig, InferenceSettings, TrialRecord, count_duplicates, run_bo
from .kernel import KernelConfig, KernelFamily
from .space import DEFAULT_GRID_CAP, SearchSpace, Variable

log = logging.getLogger(__name__)

REGRET_FLOOR = 1e-12
MAX_FAILURE_FRACTION = 0.10


class ExperimentAborted(RuntimeError):
    pass


def regret_floor_policy(raw_regret: float) -> float:
    """``log10`` of the regret with a floor so zero regret stays finite."""
    return math.log10(max(float(raw_regret), 0.0) + REGRET_FLOOR)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Recipe for a synthetic objective tabulated on a grid.

    ``kind`` is ``"gp-prior"`` (a draw from the rounded-input SE prior) or
    ``"analytic"`` (a fixed mixed-integer test function, no sampling).
    """

    space: SearchSpace
    resolution: int
    noise_variance: float = 0.0
    kind: str = "gp-prior"
    continuous_lengthscale: float = 0.2
    integer_lengthscale: float = 1.0
    amplitude: float = 1.0
    n_initial: int = 3

    def __post_init__(self) -> None:
        if self.kind not in ("gp-prior", "analytic"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    def kernel(self) -> KernelConfig:
        ls = tuple(
            self.integer_lengthscale if v.is_integer else self.continuous_lengthscale
            for v in self.space.variables
        )
        return KernelConfig(
            KernelFamily.SQUARED_EXPONENTIAL, ls, self.amplitude, 0.0, integer_transform=True
        )

    def metadata(self) -> dict[str, Any]:
        meta = {
            "kind": self.kind,
            "space": self.space.to_config(),
            "resolution": self.resolution,
            "noise_variance": self.noise_variance,
            "n_initial": self.n_initial,
        }
        if self.kind == "gp-prior":
            meta.update(
                generator_kernel="squared_exponential+rounding",
                continuous_lengthscale=self.continuous_lengthscale,
                integer_lengthscale=self.integer_lengthscale,
                amplitude=self.amplitude,
            )
        return meta


def _mixed_analytic(X: np.ndarray) -> np.ndarray:
    # stand-in for a learning-rate x tree-depth response surface:
    # u in [0, 1] (log learning rate, rescaled), depth in {1, ..., 5}
    u, depth = X[:, 0], X[:, 1]
    best_u = 0.75 - 0.1 * depth
    return (u - best_u) ** 2 * (1.0 + 0.5 * depth) + 0.08 * (depth - 3.0) ** 2 - 0.05 * np.cos(12.0 * u)


BUILTIN_OBJECTIVES: dict[str, Callable[[], ObjectiveSpec]] = {
    "synthetic-2d": lambda: ObjectiveSpec(
        SearchSpace([Variable.continuous("x0", 0, 1), Variable.integer("z0", 0, 2)]),
        resolution=201,
        n_initial=3,
    ),
    "synthetic-4d": lambda: ObjectiveSpec(
        SearchSpace(
            [
                Variable.continuous("x0", 0, 1),
                Variable.continuous("x1", 0, 1),
                Variable.integer("z0", 0, 3),
                Variable.integer("z1", 0, 2),
            ]
        ),
        resolution=21,
        n_initial=5,
    ),
    "integer-1d": lambda: ObjectiveSpec(
        SearchSpace([Variable.integer("z0", 0, 4)]), resolution=2, n_initial=2
    ),
    "mixed-analytic": lambda: ObjectiveSpec(
        SearchSpace([Variable.continuous("log_lr", 0, 1), Variable.integer("depth", 1, 5)]),
        resolution=201,
        kind="analytic",
        n_initial=3,
    ),
}


@dataclass
class SyntheticObjective:
    """Objective tabulated on a row-major grid of the search space."""

    grid: np.ndarray
    values: np.ndarray
    space: SearchSpace
    true_min: float
    noise_variance: float
    resolution: int

    def __post_init__(self) -> None:
        self._axes = self.space.grid_axes(self.resolution)
        self._strides = np.cumprod([1] + [len(a) for a in self._axes[:0:-1]])[::-1]

    def index_of(self, x: np.ndarray) -> int:
        """Grid row that represents ``x``: rounded integers, nearest continuous value."""
        x = self.space.transform(self.space.clamp(x))
        idx = 0
        for d, (axis, v) in enumerate(zip(self._axes, self.space.variables)):
            if v.is_integer:
                i = int(x[d] - v.lower)
            else:
                i = int(round_nearest((x[d] - v.lower) / v.width * (len(axis) - 1)))
            idx += i * int(self._strides[d])
        return idx

    def noise_free(self, x: np.ndarray) -> float:
        return float(self.values[self.index_of(x)])

    def __call__(self, x: np.ndarray, rng: np.random.Generator | None = None) -> float:
        value = self.noise_free(x)
        if self.noise_variance > 0:
            if rng is None:
                raise ValueError("a noisy objective needs a random stream")
            value += math.sqrt(self.noise_variance) * rng.standard_normal()
        return value


def round_nearest(v: float) -> float:
    return math.floor(v + 0.5)


def make_objective(spec: ObjectiveSpec, rng: np.random.Generator, cap: int = DEFAULT_GRID_CAP) -> SyntheticObjective:
    grid = spec.space.enumerate_grid(spec.resolution, cap=cap)
    if spec.kind == "gp-prior":
        values = gp.sample_prior_on_grid(spec.kernel(), spec.space, grid, rng, cap=cap)
    else:
        values = _mixed_analytic(grid)
    return SyntheticObjective(grid, values, spec.space, float(values.min()), spec.noise_variance, spec.resolution)


@dataclass
class RegretCurve:
    """Per-repetition log10 regret series with mean and standard error."""

    log_regret: np.ndarray  # (repetitions, evaluations)

    @property
    def repetitions(self) -> int:
        return self.log_regret.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.log_regret.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        if self.repetitions < 2:
            return np.zeros(self.log_regret.shape[1])
        return self.log_regret.std(axis=0, ddof=1) / math.sqrt(self.repetitions)

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])


@dataclass
class ExperimentSpec:
    objective: ObjectiveSpec
    strategies: Sequence[Strategy] = (Strategy.BASIC, Strategy.PROPOSED)
    n_repetitions: int = 20
    n_iterations: int = 50
    base_seed: int = 0
    n_jobs: int = 1
    inference: InferenceSettings = field(default_factory=InferenceSettings)
    kernel_family: KernelFamily = KernelFamily.MATERN52
    n_candidates: int = 1000
    n_starts: int = 5

    def __post_init__(self) -> None:
        self.strategies = tuple(Strategy(s) for s in self.strategies)
        if self.n_repetitions < 1:
            raise ValueError("n_repetitions must be >= 1")
        if not self.strategies:
            raise ValueError("need at least one strategy")

    def metadata(self) -> dict[str, Any]:
        return {
            "objective": self.objective.metadata(),
            "strategies": [s.value for s in self.strategies],
            "n_repetitions": self.n_repetitions,
            "n_iterations": self.n_iterations,
            "base_seed": self.base_seed,
            "kernel_family": KernelFamily(self.kernel_family).value,
            "inference": vars(self.inference),
            "n_candidates": self.n_candidates,
            "n_starts": self.n_starts,
            "log_base": 10,
            "regret_floor": REGRET_FLOOR,
        }


@dataclass
class RunOutcome:
    strategy: Strategy
    rep: int
    records: list[TrialRecord] | None
    regret: np.ndarray | None
    duplicates: int | None = None
    error: str | None = None


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    curves: dict[Strategy, RegretCurve]
    outcomes: list[RunOutcome]

    @property
    def failures(self) -> list[RunOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def duplicate_counts(self, strategy: Strategy) -> list[int]:
        return [o.duplicates for o in self.outcomes if o.strategy is strategy and o.duplicates is not None]


def regret_series(records: Sequence[TrialRecord], objective: SyntheticObjective) -> np.ndarray:
    """log10 regret of the best noise-free value found after each evaluation."""
    clean = np.array([objective.noise_free(np.array(r.evaluated)) for r in records])
    best = np.minimum.accumulate(clean)
    return np.array([regret_floor_policy(b - objective.true_min) for b in best])


def _run_repetition(spec: ExperimentSpec, rep: int) -> list[RunOutcome]:
    seed = spec.base_seed + rep
    objective = make_objective(spec.objective, np.random.default_rng([seed, 0]))
    pure_integer = bool(objective.space.integer_mask.all())
    outcomes = []
    for strategy in spec.strategies:
        noise_rng = np.random.default_rng([seed, 2])
        cfg = BoConfig(
            space=objective.space,
            objective=lambda x, _rng=noise_rng: objective(x, _rng),
            strategy=strategy,
            n_initial=spec.objective.n_initial,
            n_iterations=spec.n_iterations,
            seed=[seed, 1],
            kernel_family=spec.kernel_family,
            noise_variance=objective.noise_variance,
            inference=spec.inference,
            n_candidates=spec.n_candidates,
            n_starts=spec.n_starts,
        )
        try:
            records = run_bo(cfg)
        except Exception as exc:  # one failed run must not sink the batch
            log.warning("rep %d strategy %s failed: %s", rep, strategy.value, exc)
            outcomes.append(RunOutcome(strategy, rep, None, None, error=f"{type(exc).__name__}: {exc}"))
            continue
        dups = count_duplicates(records, objective.space, cfg.n_initial) if pure_integer else None
        outcomes.append(RunOutcome(strategy, rep, records, regret_series(records, objective), dups))
    return outcomes


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Paired comparison of strategies over independently drawn objectives.

    Repetition ``r`` draws its objective, initial design and noise stream
    from ``base_seed + r``; every strategy sees the same three.
    """
    reps = range(spec.n_repetitions)
    if spec.n_jobs > 1:
        with ProcessPoolExecutor(spec.n_jobs) as pool:
            batches = list(pool.map(_run_repetition, [spec] * len(reps), reps))
    else:
        batches = [_run_repetition(spec, r) for r in reps]
    outcomes = [o for batch in batches for o in batch]
    failed = sum(o.error is not None for o in outcomes)
    if failed > MAX_FAILURE_FRACTION * len(outcomes):
        raise ExperimentAborted(f"{failed} of {len(outcomes)} runs failed")
    curves = {}
    for s in spec.strategies:
        rows = [o.regret for o in outcomes if o.strategy is s and o.error is None]
        if rows:
            curves[s] = RegretCurve(np.vstack(rows))
    return ExperimentResult(spec, curves, outcomes)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_records(path, result: ExperimentResult) -> None:
    """One JSON object per line; the first line is the metadata header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {"metadata": result.spec.metadata(), "failures": [
            {"strategy": o.strategy.value, "rep": o.rep, "error": o.error} for o in result.failures
        ]}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for o in result.outcomes:
            if o.records is None:
                continue
            for rec, reg in zip(o.records, o.regret):
                line = {
                    "strategy": o.strategy.value,
                    "rep": o.rep,
                    "iter": rec.iteration,
                    "suggested": list(rec.suggested),
                    "evaluated": list(rec.evaluated),
                    "observed": rec.observed,
                    "regret": float(reg),
                }
                fh.write(json.dumps(line, sort_keys=True) + "\n")


def read_records(path) -> tuple[dict, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    return lines[0], lines[1:]


def curves_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(result.spec.metadata(), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "iter", "mean_log_regret", "stderr", "repetitions"])
    for s, curve in result.curves.items():
        for i, (m, se) in enumerate(zip(curve.mean, curve.stderr)):
            writer.writerow([s.value, i, _fmt(m), _fmt(se), curve.repetitions])
    return buf.getvalue()


def write_curves(path, result: ExperimentResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(curves_csv(result))


def read_curves(path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
