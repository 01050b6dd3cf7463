"""Rosenbrock, Rastrigin and Ackley in n dimensions, with their box domains.

All functions accept a single point of shape ``(d,)`` (returning a float) or
a batch of shape ``(n, d)`` (returning an array of ``n`` values).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from proxyopt.errors import InvalidDimensionError, OutOfDomainError, UnknownBenchmarkError


class Benchmark(str, enum.Enum):
    ROSENBROCK = "rosenbrock"
    RASTRIGIN = "rastrigin"
    ACKLEY = "ackley"

    @classmethod
    def parse(cls, name) -> "Benchmark":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise UnknownBenchmarkError(
                f"unknown benchmark {name!r}; expected one of {[b.value for b in cls]}"
            ) from None

    @property
    def title(self) -> str:
        return self.value.capitalize()


def _as_points(x, min_dim: int):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] < min_dim:
        got = 0 if x.ndim == 0 else x.shape[-1]
        raise InvalidDimensionError(f"need at least {min_dim} coordinate(s), got {got}")
    return x


def _result(values, x):
    return float(values) if x.ndim == 1 else values


def rosenbrock(x):
    x = _as_points(x, 2)
    head, tail = x[..., :-1], x[..., 1:]
    out = np.sum(100.0 * (tail - head**2) ** 2 + (head - 1.0) ** 2, axis=-1)
    return _result(out, x)


def rastrigin(x):
    x = _as_points(x, 1)
    d = x.shape[-1]
    out = 10.0 * d + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x), axis=-1)
    return _result(out, x)


def ackley(x):
    x = _as_points(x, 1)
    d = x.shape[-1]
    out = (
        -20.0 * np.exp(-0.2 * np.sqrt(np.sum(x**2, axis=-1) / d))
        - np.exp(np.sum(np.cos(2.0 * np.pi * x), axis=-1) / d)
        + 20.0
        + np.e
    )
    return _result(out, x)


FUNCTIONS = {
    Benchmark.ROSENBROCK: rosenbrock,
    Benchmark.RASTRIGIN: rastrigin,
    Benchmark.ACKLEY: ackley,
}

# (half-width of the symmetric box, coordinate of the minimizer, minimum dimension)
_DOMAINS = {
    Benchmark.ROSENBROCK: (2.048, 1.0, 2),
    Benchmark.RASTRIGIN: (5.12, 0.0, 1),
    Benchmark.ACKLEY: (32.768, 0.0, 1),
}


@dataclass(frozen=True, eq=False)
class BenchmarkSpec:
    """A benchmark function pinned to a dimension and a box domain."""

    name: Benchmark
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    global_min_point: np.ndarray
    global_min_value: float = 0.0

    def __call__(self, x):
        return FUNCTIONS[self.name](x)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=-1)
        return bool(inside) if x.ndim == 1 else inside

    def check_domain(self, x) -> None:
        """Raise :class:`OutOfDomainError` naming the first offending row."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InvalidDimensionError(f"expected {self.dim} coordinates, got {x.shape[-1]}")
        if x.ndim == 1:
            if not self.contains(x):
                raise OutOfDomainError(f"point {x.tolist()} lies outside the {self.name.value} domain")
            return
        bad = np.flatnonzero(~self.contains(x))
        if bad.size:
            raise OutOfDomainError(
                f"row {bad[0]} lies outside the {self.name.value} domain ({bad.size} rows total)",
                row=int(bad[0]),
            )

    def key(self) -> str:
        return f"{self.name.value}-{self.dim}d"

    def __eq__(self, other):
        if not isinstance(other, BenchmarkSpec):
            return NotImplemented
        return (
            self.name == other.name
            and self.dim == other.dim
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __hash__(self):
        return hash((self.name, self.dim, self.lower.tobytes(), self.upper.tobytes()))


def make_spec(name, dim: int, bounds: tuple[float, float] | None = None) -> BenchmarkSpec:
    """Build the ``BenchmarkSpec`` for ``name`` in ``dim`` dimensions.

    ``bounds`` optionally replaces the default symmetric box with
    ``[bounds[0], bounds[1]]`` on every axis; it must still contain the
    global minimizer.
    """
    bench = Benchmark.parse(name)
    half, opt, min_dim = _DOMAINS[bench]
    dim = int(dim)
    if dim < min_dim:
        raise InvalidDimensionError(f"{bench.value} needs dim >= {min_dim}, got {dim}")
    lo, hi = (-half, half) if bounds is None else (float(bounds[0]), float(bounds[1]))
    if not lo < hi:
        raise InvalidDimensionError(f"empty domain [{lo}, {hi}]")
    if not lo <= opt <= hi:
        raise OutOfDomainError(f"domain [{lo}, {hi}] excludes the {bench.value} minimizer {opt}")
    lower = np.full(dim, lo)
    upper = np.full(dim, hi)
    x_star = np.full(dim, opt)
    for arr in (lower, upper, x_star):
        arr.flags.writeable = False
    return BenchmarkSpec(bench, dim, lower, upper, x_star, 0.0)
