"""Mixed continuous/integer search spaces and the integer rounding map."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

DEFAULT_GRID_CAP = 50_000


class DimensionMismatchError(ValueError):
    """A point does not have one coordinate per variable."""


class CapacityError(ValueError):
    """A requested grid would exceed the configured size cap."""


class VariableKind(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VariableKind
    lower: float
    upper: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", VariableKind(self.kind))
        lower, upper = float(self.lower), float(self.upper)
        if not (math.isfinite(lower) and math.isfinite(upper)):
            raise ValueError(f"variable {self.name!r}: bounds must be finite")
        if self.kind is VariableKind.CONTINUOUS:
            if not lower < upper:
                raise ValueError(f"variable {self.name!r}: need lower < upper")
        else:
            if lower != round(lower) or upper != round(upper):
                raise ValueError(f"variable {self.name!r}: integer bounds must be integral")
            if not lower <= upper:
                raise ValueError(f"variable {self.name!r}: need lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def continuous(cls, name: str, lower: float, upper: float) -> "Variable":
        return cls(name, VariableKind.CONTINUOUS, lower, upper)

    @classmethod
    def integer(cls, name: str, lower: int, upper: int) -> "Variable":
        return cls(name, VariableKind.INTEGER, lower, upper)

    @property
    def is_integer(self) -> bool:
        return self.kind is VariableKind.INTEGER

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict[str, Any]:
        bound = int if self.is_integer else float
        return {
            "name": self.name,
            "type": self.kind.value,
            "lower": bound(self.lower),
            "upper": bound(self.upper),
        }


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to the nearest integer, breaking .5 ties away from zero."""
    values = np.asarray(values, dtype=float)
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


class SearchSpace:
    """Ordered box of continuous and integer variables.

    Points are float arrays of length ``dimension``; integer coordinates
    hold exact integer values once passed through :meth:`transform`.
    """

    def __init__(self, variables: Iterable[Variable]):
        self.variables: tuple[Variable, ...] = tuple(variables)
        if not self.variables:
            raise ValueError("a search space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        self.lower = np.array([v.lower for v in self.variables])
        self.upper = np.array([v.upper for v in self.variables])
        self.integer_mask = np.array([v.is_integer for v in self.variables])
        self.lower.flags.writeable = False
        self.upper.flags.writeable = False
        self.integer_mask.flags.writeable = False

    @property
    def dimension(self) -> int:
        return len(self.variables)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def has_integers(self) -> bool:
        return bool(self.integer_mask.any())

    def __repr__(self) -> str:
        return f"SearchSpace({list(self.variables)!r})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SearchSpace) and self.variables == other.variables

    def __hash__(self) -> int:
        return hash(self.variables)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dimension,) or x.ndim > 2:
            raise DimensionMismatchError(
                f"expected points of dimension {self.dimension}, got shape {x.shape}"
            )
        return x

    def clamp(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        return np.clip(x, self.lower, self.upper)

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Round the integer coordinates of ``x`` (a point or a row stack).

        Continuous coordinates are returned untouched.
        """
        x = self._check(x)
        if not self.has_integers:
            return x.copy()
        out = x.copy()
        out[..., self.integer_mask] = round_half_away(x[..., self.integer_mask])
        return out

    def contains(self, x: np.ndarray, atol: float = 0.0) -> bool:
        x = self._check(x)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def sample_uniform(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Uniform draw(s): continuous on the interval, integers on their set."""
        shape = (1 if n is None else n, self.dimension)
        u = rng.random(shape)
        out = self.lower + u * self.widths
        if self.has_integers:
            lo = self.lower[self.integer_mask]
            count = self.widths[self.integer_mask] + 1.0
            # floor(u * count) is uniform on {0, ..., count-1}
            out[:, self.integer_mask] = lo + np.minimum(np.floor(u[:, self.integer_mask] * count), count - 1)
        return out[0] if n is None else out

    def grid_axes(self, points_per_continuous_dim: int) -> list[np.ndarray]:
        if points_per_continuous_dim < 2:
            raise ValueError("points_per_continuous_dim must be >= 2")
        axes = []
        for v in self.variables:
            if v.is_integer:
                axes.append(np.arange(v.lower, v.upper + 1.0))
            else:
                axes.append(np.linspace(v.lower, v.upper, points_per_continuous_dim))
        return axes

    def grid_size(self, points_per_continuous_dim: int) -> int:
        return math.prod(len(a) for a in self.grid_axes(points_per_continuous_dim))

    def enumerate_grid(
        self, points_per_continuous_dim: int, cap: int = DEFAULT_GRID_CAP
    ) -> np.ndarray:
        """Row-major Cartesian grid; the last variable varies fastest."""
        axes = self.grid_axes(points_per_continuous_dim)
        size = math.prod(len(a) for a in axes)
        if size > cap:
            raise CapacityError(f"grid of {size} points exceeds cap {cap}")
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_config(self) -> list[dict[str, Any]]:
        return [v.to_dict() for v in self.variables]

    @classmethod
    def from_config(cls, entries: Sequence[dict[str, Any]]) -> "SearchSpace":
        variables = []
        for i, entry in enumerate(entries):
            try:
                kind = VariableKind(entry["type"])
                variables.append(
                    Variable(str(entry.get("name", f"x{i}")), kind, entry["lower"], entry["upper"])
                )
            except KeyError as exc:
                raise ValueError(f"space[{i}]: missing field {exc.args[0]!r}") from None
            except ValueError as exc:
                raise ValueError(f"space[{i}]: {exc}") from None
        return cls(variables)
