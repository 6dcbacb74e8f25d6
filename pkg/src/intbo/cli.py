"""Command-line entry point: ``intbo bench|run|sample-objective``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shlex
import subprocess
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import bench
from .acquisition import Strategy
from .driver import BoConfig, InferenceSettings, ObjectiveError, TrialRecord, run_bo
from .kernel import KernelFamily
from .space import SearchSpace

log = logging.getLogger("intbo")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("--config", "top level must be an object")
    return cfg


def _apply_overrides(cfg: dict[str, Any], args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(cfg)
    for key in ("seed", "reps", "iters", "out"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    strategies = getattr(args, "strategy", None)
    if strategies:
        cfg["strategies"] = list(strategies)
        cfg["strategy"] = strategies[-1]
    return cfg


def _get(cfg: dict, field: str, kind, default=None, required: bool = False):
    if field not in cfg:
        if required:
            raise ConfigError(field, "missing")
        return default
    value = cfg[field]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ConfigError(field, f"expected a number, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise ConfigError(field, f"expected a string, got {value!r}")
    return value


def _strategy(value: Any, field: str) -> Strategy:
    try:
        return Strategy(value)
    except ValueError:
        choices = ", ".join(s.value for s in Strategy)
        raise ConfigError(field, f"unknown strategy {value!r} (expected one of {choices})") from None


def _objective_spec(cfg: dict[str, Any]) -> bench.ObjectiveSpec:
    entry = cfg.get("benchmark", "synthetic-2d")
    if isinstance(entry, str):
        if entry not in bench.BUILTIN_OBJECTIVES:
            raise ConfigError("benchmark", f"unknown builtin {entry!r} (known: {', '.join(bench.BUILTIN_OBJECTIVES)})")
        spec = bench.BUILTIN_OBJECTIVES[entry]()
    elif isinstance(entry, dict):
        try:
            space = SearchSpace.from_config(entry["space"])
        except KeyError:
            raise ConfigError("benchmark.space", "missing") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError("benchmark.space", str(exc)) from None
        try:
            spec = bench.ObjectiveSpec(
                space,
                resolution=int(entry.get("resolution", 21)),
                kind=entry.get("kind", "gp-prior"),
                continuous_lengthscale=float(entry.get("continuous_lengthscale", 0.2)),
                integer_lengthscale=float(entry.get("integer_lengthscale", 1.0)),
                amplitude=float(entry.get("amplitude", 1.0)),
                n_initial=int(entry.get("n_initial", 3)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError("benchmark", str(exc)) from None
    else:
        raise ConfigError("benchmark", "expected a builtin name or an object")
    noise = _get(cfg, "noise_variance", float, spec.noise_variance)
    if noise < 0:
        raise ConfigError("noise_variance", "must be >= 0")
    n_initial = _get(cfg, "n_initial", int, spec.n_initial)
    if n_initial < 2:
        raise ConfigError("n_initial", "must be >= 2")
    return bench.ObjectiveSpec(
        spec.space,
        spec.resolution,
        float(noise),
        spec.kind,
        spec.continuous_lengthscale,
        spec.integer_lengthscale,
        spec.amplitude,
        n_initial,
    )


def _inference(cfg: dict[str, Any]) -> InferenceSettings:
    entry = cfg.get("inference", {})
    if not isinstance(entry, dict):
        raise ConfigError("inference", "expected an object")
    try:
        return InferenceSettings(**entry)
    except TypeError as exc:
        raise ConfigError("inference", str(exc)) from None


def _kernel(cfg: dict[str, Any]) -> KernelFamily:
    value = cfg.get("kernel", KernelFamily.MATERN52.value)
    try:
        return KernelFamily(value)
    except ValueError:
        raise ConfigError("kernel", f"unknown kernel family {value!r}") from None


def _positive(cfg: dict, field: str, default: int) -> int:
    value = _get(cfg, field, int, default)
    if value < 1:
        raise ConfigError(field, "must be >= 1")
    return value


def experiment_from_config(cfg: dict[str, Any]) -> bench.ExperimentSpec:
    strategies = cfg.get("strategies", ["basic", "proposed"])
    if not isinstance(strategies, list) or not strategies:
        raise ConfigError("strategies", "expected a nonempty list")
    return bench.ExperimentSpec(
        objective=_objective_spec(cfg),
        strategies=[_strategy(s, "strategies") for s in strategies],
        n_repetitions=_positive(cfg, "reps", 20),
        n_iterations=_positive(cfg, "iters", 50),
        base_seed=_get(cfg, "seed", int, 0),
        n_jobs=_positive(cfg, "n_jobs", 1),
        inference=_inference(cfg),
        kernel_family=_kernel(cfg),
        n_candidates=_positive(cfg, "n_candidates", 1000),
        n_starts=_positive(cfg, "n_starts", 5),
    )


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    spec = experiment_from_config(cfg)
    out = Path(_get(cfg, "out", str, "results"))
    out.mkdir(parents=True, exist_ok=True)
    result = bench.run_experiment(spec)
    bench.write_records(out / "records.jsonl", result)
    bench.write_curves(out / "curves.csv", result)
    for strategy, curve in result.curves.items():
        print(f"{strategy.value}: final mean log10 regret {curve.final_mean:.4f} "
              f"(stderr {curve.stderr[-1]:.4f}, {curve.repetitions} reps)")
    if result.failures:
        print(f"{len(result.failures)} runs failed and were excluded", file=sys.stderr)
    return EXIT_OK


class CommandObjective:
    """Evaluates points by running an external command once per point.

    The point goes to the child's stdin as one comma-separated line; the
    first non-empty line of its stdout must parse as a float.
    """

    def __init__(self, command: Sequence[str], timeout: float | None = None):
        self.command = list(command)
        self.timeout = timeout

    def __call__(self, x: np.ndarray) -> float:
        line = ",".join(repr(float(v)) for v in x) + "\n"
        proc = subprocess.run(
            self.command, input=line, capture_output=True, text=True, timeout=self.timeout
        )
        if proc.returncode != 0:
            raise RuntimeError(f"command exited with status {proc.returncode}: {proc.stderr.strip()}")
        for out_line in proc.stdout.splitlines():
            if out_line.strip():
                try:
                    return float(out_line.strip())
                except ValueError:
                    raise RuntimeError(f"unparsable objective output {out_line.strip()!r}") from None
        raise RuntimeError("objective produced no output")


def read_trial_records(path: Path) -> list[TrialRecord]:
    """Parse a record file, dropping a torn final line."""
    if not path.exists():
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(TrialRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            if i >= len(lines) - 2:
                log.warning("dropping incomplete final record in %s", path)
                break
            raise
    return records


def _record_line(rec: TrialRecord) -> str:
    return json.dumps(rec.to_dict(), sort_keys=True) + "\n"


def _run_config(cfg: dict[str, Any]) -> tuple[BoConfig, Path]:
    objective_cfg = cfg.get("objective")
    if not isinstance(objective_cfg, dict):
        raise ConfigError("objective", "expected an object with 'command' or 'builtin'")
    noise = cfg.get("noise_variance", None)
    if noise is not None and (isinstance(noise, bool) or not isinstance(noise, (int, float)) or noise < 0):
        raise ConfigError("noise_variance", "expected null or a number >= 0")
    if "command" in objective_cfg:
        command = objective_cfg["command"]
        if isinstance(command, str):
            command = shlex.split(command)
        if not command or not all(isinstance(c, str) for c in command):
            raise ConfigError("objective.command", "must be a nonempty command")
        if "space" not in cfg:
            raise ConfigError("space", "missing")
        try:
            space = SearchSpace.from_config(cfg["space"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("space", str(exc)) from None
        objective = CommandObjective(command, objective_cfg.get("timeout"))
        n_initial_default = 3
    elif "builtin" in objective_cfg:
        name = objective_cfg["builtin"]
        spec = _objective_spec({"benchmark": name, "noise_variance": noise or 0.0})
        objective_seed = _get(objective_cfg, "seed", int, 0)
        synthetic = bench.make_objective(spec, np.random.default_rng([objective_seed, 0]))
        noise_rng = np.random.default_rng([objective_seed, 2])
        space = spec.space
        objective = lambda x: synthetic(x, noise_rng)  # noqa: E731
        n_initial_default = spec.n_initial
    else:
        raise ConfigError("objective", "expected 'command' or 'builtin'")
    n_initial = _get(cfg, "n_initial", int, n_initial_default)
    if n_initial < 2:
        raise ConfigError("n_initial", "must be >= 2")
    bo = BoConfig(
        space=space,
        objective=objective,
        strategy=_strategy(cfg.get("strategy", "proposed"), "strategy"),
        n_initial=n_initial,
        n_iterations=_positive(cfg, "iters", 20),
        seed=_get(cfg, "seed", int, 0),
        kernel_family=_kernel(cfg),
        noise_variance=None if noise is None else float(noise),
        inference=_inference(cfg),
        n_candidates=_positive(cfg, "n_candidates", 1000),
        n_starts=_positive(cfg, "n_starts", 5),
    )
    out = Path(_get(cfg, "out", str, "run"))
    return bo, out


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    bo, out = _run_config(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trials.jsonl"
    previous = read_trial_records(path)
    # rewrite so a torn final line is not left in front of new appends
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(_record_line(r) for r in previous)
    os.replace(tmp, path)
    if previous:
        print(f"resuming from {len(previous)} recorded evaluations", file=sys.stderr)

    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        def append(rec: TrialRecord) -> None:
            fh.write(_record_line(rec))
            fh.flush()

        try:
            records = run_bo(bo, replay=previous, on_record=append)
        except ObjectiveError as exc:
            print(f"objective failed: {exc}; {len(exc.records)} records kept in {path}", file=sys.stderr)
            return EXIT_RUNTIME
    best = min(records, key=lambda r: r.observed)
    print(f"incumbent {best.observed!r} at {list(best.evaluated)} after {len(records)} evaluations")
    return EXIT_OK


def cmd_sample_objective(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    spec = _objective_spec(cfg)
    seed = _get(cfg, "seed", int, 0)
    objective = bench.make_objective(spec, np.random.default_rng([seed, 0]))
    out = Path(_get(cfg, "out", str, "objective"))
    path = out if out.suffix == ".csv" else out / "objective.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(spec.metadata(), seed=seed, true_min=objective.true_min, rows=len(objective.values))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([v.name for v in spec.space.variables] + ["value"])
        for point, value in zip(objective.grid, objective.values):
            writer.writerow([repr(float(c)) for c in point] + [repr(float(value))])
    print(f"wrote {len(objective.values)} rows to {path}; true_min {objective.true_min!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intbo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "bench": (cmd_bench, "run a paired strategy comparison on synthetic objectives"),
        "run": (cmd_run, "optimize one objective (builtin or external command)"),
        "sample-objective": (cmd_sample_objective, "tabulate one synthetic objective to CSV"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="DIR")
        if name != "sample-objective":
            p.add_argument("--iters", type=int)
            p.add_argument("--strategy", action="append", choices=[s.value for s in Strategy])
        if name == "bench":
            p.add_argument("--reps", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (bench.ExperimentAborted, ObjectiveError, np.linalg.LinAlgError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
