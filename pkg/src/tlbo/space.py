"""Mixed continuous/integer/categorical search spaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from tlbo import kernels

CONTINUOUS = "continuous"
INTEGER = "integer"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, INTEGER, CATEGORICAL)


class DomainError(ValueError):
    """A value lies outside its variable's domain."""


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            cats = tuple(self.categories)
            object.__setattr__(self, "categories", cats)
            if not cats:
                raise ValueError(f"{self.name}: categories must be non-empty")
            if len(set(cats)) != len(cats):
                raise ValueError(f"{self.name}: duplicate categories")
        else:
            if self.lower is None or self.upper is None:
                raise ValueError(f"{self.name}: numeric variable needs bounds")
            if not self.lower < self.upper:
                raise ValueError(f"{self.name}: need lower < upper")
            if self.kind == INTEGER and (
                self.lower != int(self.lower) or self.upper != int(self.upper)
            ):
                raise ValueError(f"{self.name}: integer bounds must be integers")

    @property
    def is_numeric(self) -> bool:
        return self.kind != CATEGORICAL

    def check(self, value) -> Any:
        """Return ``value`` normalised to the variable's type or raise."""
        if self.kind == CATEGORICAL:
            if value not in self.categories:
                raise DomainError(f"{self.name}: {value!r} not in {self.categories}")
            return value
        if isinstance(value, (bool, np.bool_)) or not isinstance(
            value, (int, float, np.integer, np.floating)
        ):
            raise DomainError(f"{self.name}: {value!r} is not a number")
        if self.kind == INTEGER:
            if float(value) != int(value):
                raise DomainError(f"{self.name}: {value!r} is not an integer")
            value = int(value)
        else:
            value = float(value)
        if not self.lower <= value <= self.upper:
            raise DomainError(
                f"{self.name}: {value!r} outside [{self.lower}, {self.upper}]"
            )
        return value

    def to_dict(self) -> dict:
        if self.kind == CATEGORICAL:
            return {"name": self.name, "kind": self.kind, "categories": list(self.categories)}
        return {"name": self.name, "kind": self.kind, "lower": self.lower, "upper": self.upper}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSpec":
        if d.get("conditions") or d.get("parent"):
            raise ValueError(f"{d.get('name')}: conditional variables are not supported")
        kind = d["kind"]
        if kind == CATEGORICAL:
            return cls(d["name"], kind, categories=tuple(d["categories"]))
        return cls(d["name"], kind, lower=d["lower"], upper=d["upper"])


@dataclass(frozen=True)
class Configuration:
    """A point of a search space; hashable so it can live in exclusion sets."""

    values: tuple

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class SearchSpace:
    variables: tuple[VariableSpec, ...]
    _num_idx: tuple = field(init=False, repr=False, compare=False)
    _cat_idx: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        if not variables:
            raise ValueError("search space needs at least one variable")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        object.__setattr__(
            self, "_num_idx", tuple(i for i, v in enumerate(variables) if v.is_numeric)
        )
        object.__setattr__(
            self, "_cat_idx", tuple(i for i, v in enumerate(variables) if not v.is_numeric)
        )

    def __len__(self):
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def numeric_indices(self) -> tuple:
        return self._num_idx

    @property
    def categorical_indices(self) -> tuple:
        return self._cat_idx

    def make(self, values: Iterable) -> Configuration:
        values = tuple(values)
        if len(values) != len(self.variables):
            raise DomainError(
                f"expected {len(self.variables)} values, got {len(values)}"
            )
        return Configuration(tuple(v.check(x) for v, x in zip(self.variables, values)))

    def to_dict(self) -> dict:
        return {"variables": [v.to_dict() for v in self.variables]}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(tuple(VariableSpec.from_dict(v) for v in d["variables"]))

    # -- numeric representation ------------------------------------------

    def encode(self, config: Configuration) -> np.ndarray:
        """Numeric vector: numeric dims scaled to [0, 1], categoricals as index."""
        out = np.empty(len(self.variables))
        for i, (var, x) in enumerate(zip(self.variables, config.values)):
            x = var.check(x)
            if var.is_numeric:
                out[i] = (x - var.lower) / (var.upper - var.lower)
            else:
                out[i] = var.categories.index(x)
        return out

    def encode_many(self, configs: Sequence[Configuration]) -> np.ndarray:
        if not len(configs):
            return np.empty((0, len(self.variables)))
        return np.vstack([self.encode(c) for c in configs])

    def decode(self, vector) -> Configuration:
        """Inverse of ``encode``; integers are rounded, categoricals indexed."""
        values = []
        for var, u in zip(self.variables, vector):
            if var.is_numeric:
                x = var.lower + float(np.clip(u, 0.0, 1.0)) * (var.upper - var.lower)
                if var.kind == INTEGER:
                    x = int(np.clip(round(x), var.lower, var.upper))
                else:
                    x = float(np.clip(x, var.lower, var.upper))
            else:
                x = var.categories[int(np.clip(round(u), 0, len(var.categories) - 1))]
            values.append(x)
        return Configuration(tuple(values))

    def split(self, encoded: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split an encoded matrix into (numeric, categorical) blocks."""
        encoded = np.atleast_2d(encoded)
        return (
            np.ascontiguousarray(encoded[:, list(self._num_idx)], dtype=float),
            np.ascontiguousarray(encoded[:, list(self._cat_idx)], dtype=float),
        )

    def snap(self, encoded: np.ndarray) -> np.ndarray:
        """Project encoded rows onto representable points (round integers/categories)."""
        out = np.clip(np.array(encoded, dtype=float), 0.0, None)
        for i, var in enumerate(self.variables):
            if var.kind == CONTINUOUS:
                out[:, i] = np.clip(out[:, i], 0.0, 1.0)
            elif var.kind == INTEGER:
                span = var.upper - var.lower
                out[:, i] = np.round(np.clip(out[:, i], 0.0, 1.0) * span) / span
            else:
                out[:, i] = np.clip(np.round(out[:, i]), 0, len(var.categories) - 1)
        return out


def latin_hypercube_encoded(space: SearchSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Encoded LHS rows; integer and categorical columns are already snapped."""
    enc = np.empty((n, len(space)))
    for i, var in enumerate(space.variables):
        if var.is_numeric:
            enc[:, i] = (rng.permutation(n) + rng.random(n)) / n
        else:
            enc[:, i] = rng.integers(0, len(var.categories), size=n)
    return space.snap(enc)


def sample_latin_hypercube(space: SearchSpace, n: int, seed) -> list[Configuration]:
    """Latin hypercube design of ``n`` points.

    Each numeric variable gets one draw per equal-width stratum (integers are
    rounded after the stratified draw); categoricals are uniform.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    enc = latin_hypercube_encoded(space, n, np.random.default_rng(seed))
    return [space.decode(row) for row in enc]


def gower_distance(space: SearchSpace, a: Configuration, b: Configuration) -> float:
    """sqrt(1 - S) with S the mean per-dimension Gower similarity."""
    return float(gower_matrix(space, [a], [b])[0, 0])


def gower_matrix(
    space: SearchSpace, a: Sequence[Configuration], b: Sequence[Configuration] | None = None
) -> np.ndarray:
    """Pairwise Gower distances between two lists of configurations."""
    ea = space.encode_many(a)
    eb = ea if b is None else space.encode_many(b)
    an, ac = space.split(ea)
    bn, bc = space.split(eb)
    return kernels.gower_matrix(an, ac, bn, bc)
