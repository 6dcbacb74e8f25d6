import math

import numpy as np
import pytest

from intbo.kernel import KernelConfig, KernelFamily
from intbo.space import SearchSpace, Variable


def scalar_kernel(cfg: KernelConfig, space: SearchSpace, x, x2) -> float:
    """Reference covariance written out with plain floats."""
    if cfg.integer_transform:
        x = [_round(v) if var.is_integer else v for v, var in zip(x, space.variables)]
        x2 = [_round(v) if var.is_integer else v for v, var in zip(x2, space.variables)]
    r2 = sum(((a - b) / ell) ** 2 for a, b, ell in zip(x, x2, cfg.lengthscales))
    amp2 = cfg.amplitude**2
    if cfg.family is KernelFamily.SQUARED_EXPONENTIAL:
        return amp2 * math.exp(-0.5 * r2)
    r = math.sqrt(r2)
    return amp2 * (1 + math.sqrt(5) * r + 5.0 / 3.0 * r2) * math.exp(-math.sqrt(5) * r)


def _round(v: float) -> float:
    return float(math.floor(abs(v) + 0.5)) * (1.0 if v >= 0 else -1.0)


def oracle_gram(cfg, space, X):
    return np.array([[scalar_kernel(cfg, space, a, b) for b in X] for a in X])


def random_space(rng: np.random.Generator, max_dim: int = 4) -> SearchSpace:
    dim = int(rng.integers(1, max_dim + 1))
    variables = []
    for d in range(dim):
        if rng.random() < 0.5:
            lo = float(rng.uniform(-2, 1))
            variables.append(Variable.continuous(f"c{d}", lo, lo + float(rng.uniform(0.5, 3))))
        else:
            lo = int(rng.integers(-2, 2))
            variables.append(Variable.integer(f"i{d}", lo, lo + int(rng.integers(1, 5))))
    return SearchSpace(variables)


def random_kernel(rng: np.random.Generator, space: SearchSpace, transform=None, noise=None) -> KernelConfig:
    return KernelConfig(
        family=KernelFamily.MATERN52 if rng.random() < 0.5 else KernelFamily.SQUARED_EXPONENTIAL,
        lengthscales=tuple(rng.uniform(0.3, 2.0, space.dimension) * np.maximum(space.widths, 1)),
        amplitude=float(rng.uniform(0.5, 2.0)),
        noise_variance=float(rng.uniform(1e-3, 0.1)) if noise is None else noise,
        integer_transform=bool(rng.random() < 0.5) if transform is None else transform,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mixed_space():
    return SearchSpace([Variable.integer("z", 0, 2), Variable.continuous("x", 0, 1)])


@pytest.fixture
def int5_space():
    return SearchSpace([Variable.integer("z", 0, 4)])


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the acceptance summary."""

    def record(name: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
