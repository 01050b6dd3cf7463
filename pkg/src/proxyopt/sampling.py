"""Training sets for proxy fitting: dense, sparse and Gaussian regimes."""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from proxyopt.benchmarks import BenchmarkSpec
from proxyopt.errors import (
    InsufficientSamplesError,
    InvalidParameterError,
    OutOfDomainError,
    ShapeError,
)

SPARSE_FRACTION = 0.25
DEFAULT_SIGMA_FRAC = 0.1


class Scheme(str, enum.Enum):
    DENSE = "dense"
    SPARSE = "sparse"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True, eq=False)
class SampleSet:
    inputs: np.ndarray
    targets: np.ndarray
    scheme: Scheme
    spec: BenchmarkSpec
    seed: int = 0

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def grid_points_per_axis(n: int, d: int) -> int:
    """Largest k with k**d <= n, computed in integers."""
    k = max(1, int(round(n ** (1.0 / d))))
    while k**d > n:
        k -= 1
    while (k + 1) ** d <= n:
        k += 1
    return k


def _grid(spec: BenchmarkSpec, k: int) -> np.ndarray:
    if k == 1:
        axes = [np.array([(lo + hi) / 2.0]) for lo, hi in zip(spec.lower, spec.upper)]
    else:
        axes = [np.linspace(lo, hi, k) for lo, hi in zip(spec.lower, spec.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _sobol(spec: BenchmarkSpec, n: int) -> np.ndarray:
    engine = qmc.Sobol(spec.dim, scramble=False)
    with warnings.catch_warnings():
        # n is rarely a power of two; balance is fine for our purposes
        warnings.simplefilter("ignore", UserWarning)
        unit = engine.random(n)
    return qmc.scale(unit, spec.lower, spec.upper)


def _uniform_design(spec: BenchmarkSpec, n: int) -> np.ndarray:
    # A true grid is only meaningful up to 2D at these budgets.
    if spec.dim <= 2:
        return _grid(spec, grid_points_per_axis(n, spec.dim))
    return _sobol(spec, n)


def label_samples(spec: BenchmarkSpec, inputs) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != spec.dim:
        raise ShapeError(f"expected an (n, {spec.dim}) matrix, got shape {inputs.shape}")
    spec.check_domain(inputs)
    return np.asarray(spec(inputs), dtype=float)


def sample_dense(spec: BenchmarkSpec, n: int, seed: int = 0) -> SampleSet:
    """Equally spaced grid (d <= 2) or unscrambled Sobol points (d > 2).

    Neither construction is random; ``seed`` is only recorded.
    """
    n = int(n)
    if n < 1 or (spec.dim <= 2 and n < 2**spec.dim):
        raise InsufficientSamplesError(
            f"{n} samples cannot form a grid with 2 points per axis in {spec.dim}D"
        )
    x = _uniform_design(spec, n)
    return SampleSet(x, label_samples(spec, x), Scheme.DENSE, spec, seed)


def sparse_count(n_dense: int) -> int:
    return int(math.floor(SPARSE_FRACTION * n_dense + 0.5))


def sample_sparse(spec: BenchmarkSpec, n_dense: int, seed: int = 0) -> SampleSet:
    n_dense = int(n_dense)
    if n_dense < 4:
        raise InsufficientSamplesError(f"sparse sampling needs n_dense >= 4, got {n_dense}")
    x = _uniform_design(spec, sparse_count(n_dense))
    return SampleSet(x, label_samples(spec, x), Scheme.SPARSE, spec, seed)


def sample_gaussian(
    spec: BenchmarkSpec, n: int, sigma_frac: float = DEFAULT_SIGMA_FRAC, seed: int = 0
) -> SampleSet:
    """Axis-aligned normal draws around the minimizer, rejected outside the box."""
    if not 0.0 < sigma_frac <= 1.0:
        raise InvalidParameterError(f"sigma_frac must lie in (0, 1], got {sigma_frac}")
    n = int(n)
    if n < 1:
        raise InsufficientSamplesError(f"need at least one sample, got {n}")
    rng = np.random.default_rng(seed)
    sigma = sigma_frac * spec.span
    kept = []
    have = 0
    while have < n:
        draw = rng.normal(spec.global_min_point, sigma, size=(max(n - have, 64), spec.dim))
        draw = draw[spec.contains(draw)]
        kept.append(draw)
        have += draw.shape[0]
    x = np.concatenate(kept)[:n]
    return SampleSet(x, label_samples(spec, x), Scheme.GAUSSIAN, spec, seed)


def make_samples(
    spec: BenchmarkSpec,
    scheme,
    n: int,
    seed: int = 0,
    sigma_frac: float = DEFAULT_SIGMA_FRAC,
) -> SampleSet:
    """Dispatch on ``scheme``; for sparse, ``n`` is the dense budget."""
    scheme = Scheme(scheme)
    if scheme is Scheme.DENSE:
        return sample_dense(spec, n, seed)
    if scheme is Scheme.SPARSE:
        return sample_sparse(spec, n, seed)
    return sample_gaussian(spec, n, sigma_frac, seed)


def write_samples_csv(path, samples: SampleSet) -> None:
    d = samples.dim
    with open(path, "w", newline="") as fh:
        fh.write(",".join([f"x{i}" for i in range(d)] + ["f"]) + "\n")
        for row, y in zip(samples.inputs, samples.targets):
            fh.write(",".join(f"{v:.17g}" for v in (*row, y)) + "\n")


class SampleFileError(InvalidParameterError):
    """Malformed sample CSV; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


def read_samples_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``x0,...,x{d-1},f`` rows back into ``(inputs, targets)``."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SampleFileError(f"{path}: empty file", line=1) from None
        d = len(header) - 1
        if d < 1 or header != [f"x{i}" for i in range(d)] + ["f"]:
            raise SampleFileError(f"{path}:1: bad header {header!r}", line=1)
        rows = []
        for lineno, fields in enumerate(reader, start=2):
            if len(fields) != d + 1:
                raise SampleFileError(
                    f"{path}:{lineno}: expected {d + 1} fields, got {len(fields)}", line=lineno
                )
            try:
                values = [float(v) for v in fields]
            except ValueError:
                raise SampleFileError(f"{path}:{lineno}: non-numeric field", line=lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise SampleFileError(f"{path}:{lineno}: non-finite value", line=lineno)
            rows.append(values)
    if not rows:
        raise SampleFileError(f"{path}: no samples", line=2)
    data = np.array(rows)
    return data[:, :d], data[:, d]


def load_sample_set(path, spec: BenchmarkSpec, scheme=Scheme.DENSE, seed: int = 0) -> SampleSet:
    inputs, targets = read_samples_csv(path)
    if inputs.shape[1] != spec.dim:
        raise ShapeError(f"{path} holds {inputs.shape[1]}D samples, expected {spec.dim}D")
    try:
        spec.check_domain(inputs)
    except OutOfDomainError as exc:
        raise SampleFileError(f"{path}:{exc.row + 2}: {exc}", line=exc.row + 2) from None
    return SampleSet(inputs, targets, Scheme(scheme), spec, seed)
