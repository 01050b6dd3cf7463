"""Experiment grid: train proxies, run PSO/GA on them, score and tabulate.

Every trial is identified by ``(function, dim, landscape, optimizer,
seed_index)``. A master seed expands, per seed index, into independent
sampling, training and optimizer seeds, so the same seed index reuses the
same training data, the same trained proxy and the same optimizer stream
across the grid. A proxy is trained once per ``(function, landscape,
seed_index)`` and shared by both optimizers.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from proxyopt import __version__
from proxyopt.benchmarks import Benchmark, BenchmarkSpec, make_spec
from proxyopt.errors import InvalidParameterError, ShapeError, UnsupportedError
from proxyopt.neuralnet import (
    MlpModel,
    NormalizationSpec,
    TrainConfig,
    build_mlp,
    dataset_loss,
    heldout_mse,
    train,
)
from proxyopt.optimizers import GaConfig, Objective, OptResult, PsoConfig, ga_run, pso_run
from proxyopt.sampling import DEFAULT_SIGMA_FRAC, Scheme, make_samples

log = logging.getLogger(__name__)

STD_KIND = "population"
RASTER_SIZE = 200


class Landscape(str, enum.Enum):
    GROUND_TRUTH = "ground-truth"
    DENSE = "dense"
    SPARSE = "sparse"
    GAUSSIAN = "gaussian"

    @property
    def scheme(self) -> Scheme | None:
        return None if self is Landscape.GROUND_TRUTH else Scheme(self.value)


class Method(str, enum.Enum):
    PSO = "pso"
    GA = "ga"


FUNCTIONS = tuple(Benchmark)
LANDSCAPES = tuple(Landscape)
METHODS = tuple(Method)


def default_architecture(function, dim: int) -> tuple[tuple[int, ...], int]:
    """Hidden layout and epoch count used for ``function`` in ``dim`` dimensions."""
    function = Benchmark.parse(function)
    if function is Benchmark.ROSENBROCK:
        if dim <= 2:
            return (dim, 15, 50, 15, 1), 100
        return (dim, 15, 50, 15, 10, 1), 100 if dim < 10 else 500
    return (dim, 20, 50, 120, 70, 20, 10, 1), 500


@dataclass(frozen=True)
class Settings:
    """Everything about a run except the grid coordinates."""

    n_seeds: int = 5
    n_samples: int = 10_000
    sigma_frac: float = DEFAULT_SIGMA_FRAC
    layers: tuple[int, ...] | None = None
    epochs: int | None = None
    batch_size: int = 64
    learning_rate: float = 1e-3
    pso: PsoConfig = field(default_factory=PsoConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    # function name -> (lower, upper) applied to every axis
    bounds: dict = field(default_factory=dict)
    master_seed: int = 0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise InvalidParameterError(f"n_seeds must be >= 1, got {self.n_seeds}")

    def spec(self, function, dim: int) -> BenchmarkSpec:
        function = Benchmark.parse(function)
        return make_spec(function, dim, self.bounds.get(function.value))

    def architecture(self, function, dim: int) -> tuple[tuple[int, ...], int]:
        layers, epochs = default_architecture(function, dim)
        if self.layers is not None:
            layers = tuple(self.layers)
            if layers[0] != dim:
                raise ShapeError(f"layers {list(layers)} do not start with input width {dim}")
        return layers, self.epochs if self.epochs is not None else epochs

    def to_dict(self) -> dict:
        out = asdict(self)
        out["layers"] = None if self.layers is None else list(self.layers)
        out["bounds"] = {k: list(v) for k, v in self.bounds.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Settings":
        data = dict(data)
        data["pso"] = PsoConfig(**data.get("pso", {}))
        data["ga"] = GaConfig(**data.get("ga", {}))
        if data.get("layers") is not None:
            data["layers"] = tuple(data["layers"])
        data["bounds"] = {k: tuple(v) for k, v in data.get("bounds", {}).items()}
        return cls(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    function: Benchmark
    dim: int
    landscape: Landscape
    optimizer: Method
    settings: Settings = field(default_factory=Settings)


@dataclass(frozen=True)
class TrialSeeds:
    sampling: int
    training: int
    optimizer: int


def trial_seeds(master_seed: int, seed_index: int) -> TrialSeeds:
    """Counter-based split of the master seed for one seed index."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(seed_index),))
    a, b, c = (int(v) for v in ss.generate_state(3, dtype=np.uint32))
    return TrialSeeds(a, b, c)


@dataclass
class ProxyReport:
    model: MlpModel
    scheme: Scheme
    n_samples: int
    seeds: TrialSeeds
    layers: tuple[int, ...]
    epochs: int
    loss_history: np.ndarray
    initial_loss: float
    final_loss: float
    heldout_mse: float
    checksum: str


def build_proxy(function, dim: int, landscape: Landscape, settings: Settings, seed_index: int) -> ProxyReport:
    """Sample, label and train the proxy for one seed index.

    ``initial_loss``/``final_loss`` are full training-set MSEs in normalized
    units before the first and after the last Adam step.
    """
    landscape = Landscape(landscape)
    if landscape.scheme is None:
        raise InvalidParameterError("the ground-truth landscape has no proxy")
    spec = settings.spec(function, dim)
    seeds = trial_seeds(settings.master_seed, seed_index)
    samples = make_samples(spec, landscape.scheme, settings.n_samples, seeds.sampling, settings.sigma_frac)
    layers, epochs = settings.architecture(function, dim)
    init_seed, shuffle_seed = (int(v) for v in np.random.SeedSequence(seeds.training).generate_state(2))
    model = build_mlp(layers, init_seed)
    model.norm = NormalizationSpec.fit(spec.lower, spec.upper, samples.targets)
    initial = dataset_loss(model, samples.inputs, samples.targets)
    config = TrainConfig(epochs, settings.batch_size, settings.learning_rate, shuffle_seed)
    model, history = train(model, samples, config)
    return ProxyReport(
        model=model,
        scheme=landscape.scheme,
        n_samples=len(samples),
        seeds=seeds,
        layers=layers,
        epochs=epochs,
        loss_history=history,
        initial_loss=initial,
        final_loss=dataset_loss(model, samples.inputs, samples.targets),
        heldout_mse=heldout_mse(model, spec, max(len(samples) // 10, 1), shuffle_seed),
        checksum=model.checksum(),
    )


def run_optimizer(method: Method, objective: Objective, settings: Settings, seed: int) -> OptResult:
    method = Method(method)
    if method is Method.PSO:
        return pso_run(replace(settings.pso, seed=seed), objective)
    return ga_run(replace(settings.ga, seed=seed), objective)


def euclidean_distance(x, x_star) -> float:
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise ShapeError(f"dimension mismatch: {x.shape} vs {x_star.shape}")
    return float(np.sqrt(np.sum((x - x_star) ** 2)))


@dataclass
class TrialResult:
    function: Benchmark
    dim: int
    landscape: Landscape
    optimizer: Method
    seed_index: int
    result: OptResult | None
    distance: float
    proxy_checksum: str | None = None
    error: str | None = None


def run_trial(config: ExperimentConfig, seed_index: int, proxy: ProxyReport | None = None) -> TrialResult:
    """One optimizer run on one landscape, scored by distance to the minimizer.

    ``proxy`` lets callers reuse an already trained network for this seed.
    """
    settings = config.settings
    spec = settings.spec(config.function, config.dim)
    seeds = trial_seeds(settings.master_seed, seed_index)
    try:
        if Landscape(config.landscape) is Landscape.GROUND_TRUTH:
            objective = Objective.true_function(spec)
        else:
            if proxy is None:
                proxy = build_proxy(config.function, config.dim, config.landscape, settings, seed_index)
            objective = Objective.proxy(proxy.model, spec)
        result = run_optimizer(config.optimizer, objective, settings, seeds.optimizer)
    except Exception as exc:
        exc.seed_index = seed_index
        if exc.args and isinstance(exc.args[0], str):
            exc.args = (f"seed {seed_index}: {exc.args[0]}",) + exc.args[1:]
        raise
    return TrialResult(
        Benchmark.parse(config.function),
        config.dim,
        Landscape(config.landscape),
        Method(config.optimizer),
        seed_index,
        result,
        euclidean_distance(result.best_point, spec.global_min_point),
        None if proxy is None else proxy.checksum,
    )


def summarize(distances) -> tuple[float, float]:
    """Mean and population standard deviation."""
    d = np.asarray(list(distances), dtype=float)
    if d.size == 0:
        raise InvalidParameterError("cannot summarize an empty list of distances")
    return float(d.mean()), float(d.std())


@dataclass
class SummaryRow:
    function: Benchmark
    dim: int
    landscape: Landscape
    optimizer: Method
    distances: tuple[float, ...]
    mean_distance: float
    std_distance: float
    error: str | None = None
    std_kind: str = STD_KIND


@dataclass
class TrainingRecord:
    function: Benchmark
    dim: int
    landscape: Landscape
    seed_index: int
    n_samples: int
    epochs: int
    initial_loss: float
    final_loss: float
    heldout_mse: float
    checksum: str
    # epoch index of the lowest running training loss
    best_epoch: int = -1


@dataclass
class TableResult:
    dim: int
    settings: Settings
    rows: list[SummaryRow]
    trials: list[TrialResult]
    training: list[TrainingRecord]

    def row(self, function, landscape, optimizer) -> SummaryRow:
        key = (Benchmark.parse(function), Landscape(landscape), Method(optimizer))
        for r in self.rows:
            if (r.function, r.landscape, r.optimizer) == key:
                return r
        raise KeyError(key)


def _run_cell(function, dim, landscape, methods, settings, seed_index):
    """All optimizers on one (function, landscape, seed) with one shared proxy."""
    report = None
    record = None
    try:
        if landscape is not Landscape.GROUND_TRUTH:
            report = build_proxy(function, dim, landscape, settings, seed_index)
            record = TrainingRecord(
                function, dim, landscape, seed_index, report.n_samples, report.epochs,
                report.initial_loss, report.final_loss, report.heldout_mse, report.checksum,
                int(np.argmin(report.loss_history)),
            )
    except Exception as exc:  # noqa: BLE001 - reported per row
        log.exception("proxy training failed for %s %s seed %d", function.value, landscape.value, seed_index)
        error = f"seed {seed_index}: {type(exc).__name__}: {exc}"
        return [TrialResult(function, dim, landscape, m, seed_index, None, math.nan, None, error) for m in methods], None

    trials = []
    for method in methods:
        config = ExperimentConfig(function, dim, landscape, method, settings)
        try:
            trials.append(run_trial(config, seed_index, report))
        except Exception as exc:  # noqa: BLE001 - reported per row
            log.exception("trial failed")
            trials.append(TrialResult(function, dim, landscape, method, seed_index, None, math.nan, None,
                                      f"{type(exc).__name__}: {exc}"))
    return trials, record


def run_table(
    dim: int,
    settings: Settings | None = None,
    functions=FUNCTIONS,
    landscapes=LANDSCAPES,
    optimizers=METHODS,
    jobs: int = 1,
) -> TableResult:
    """Run the full grid and aggregate per-seed distances into summary rows.

    Rows are ordered landscape, then function, then optimizer, regardless of
    completion order. Failed trials mark their row instead of aborting.
    """
    settings = settings or Settings()
    functions = [Benchmark.parse(f) for f in functions]
    landscapes = [Landscape(x) for x in landscapes]
    methods = [Method(m) for m in optimizers]
    cells = [(f, ls, k) for ls in landscapes for f in functions for k in range(settings.n_seeds)]

    def args(cell):
        f, ls, k = cell
        return (f, dim, ls, methods, settings, k)

    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, *args(c)) for c in cells]
            outputs = [fut.result() for fut in futures]
    else:
        outputs = []
        for c in cells:
            log.info("cell %s %dD %s seed %d", c[0].value, dim, c[1].value, c[2])
            outputs.append(_run_cell(*args(c)))

    trials = [t for out, _ in outputs for t in out]
    training = [rec for _, rec in outputs if rec is not None]
    rows = []
    for ls in landscapes:
        for f in functions:
            for m in methods:
                mine = [t for t in trials if (t.function, t.landscape, t.optimizer) == (f, ls, m)]
                mine.sort(key=lambda t: t.seed_index)
                ok = [t.distance for t in mine if t.error is None]
                errors = [t.error for t in mine if t.error is not None]
                mean, std = summarize(ok) if ok else (math.nan, math.nan)
                rows.append(SummaryRow(f, dim, ls, m, tuple(t.distance for t in mine), mean, std,
                                       "; ".join(errors) or None))
    return TableResult(dim, settings, rows, trials, training)


# -- persistence -----------------------------------------------------------


def _num(v) -> str:
    return f"{v:.17g}"


TRIAL_COLUMNS = ["function", "dim", "landscape", "optimizer", "seed", "distance", "best_value", "evaluations"]


def write_trials_csv(path, trials) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for t in trials:
            ok = t.result is not None
            w.writerow([
                t.function.value, t.dim, t.landscape.value, t.optimizer.value, t.seed_index,
                _num(t.distance), _num(t.result.best_value) if ok else "nan",
                t.result.evaluations if ok else 0,
            ])


def write_summary_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function", "dim", "landscape", "optimizer", "n_seeds", "mean_distance", "std_distance", "error"])
        for r in rows:
            w.writerow([r.function.value, r.dim, r.landscape.value, r.optimizer.value, len(r.distances),
                        _num(r.mean_distance), _num(r.std_distance), r.error or ""])


def write_table_csv(path, rows) -> None:
    """Wide layout: one line per landscape, one column per function/optimizer."""
    columns = []
    for r in rows:
        key = (r.function, r.optimizer)
        if key not in columns:
            columns.append(key)
    landscapes = []
    for r in rows:
        if r.landscape not in landscapes:
            landscapes.append(r.landscape)
    cell = {(r.landscape, r.function, r.optimizer): r for r in rows}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["landscape"] + [f"{f.value}_{m.value}" for f, m in columns])
        for ls in landscapes:
            line = [ls.value]
            for f, m in columns:
                r = cell.get((ls, f, m))
                if r is None:
                    line.append("")
                elif r.error:
                    line.append("error")
                else:
                    line.append(f"{r.mean_distance:.2f} ± {r.std_distance:.2f}")
            w.writerow(line)


def write_training_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function", "dim", "landscape", "seed", "n_samples", "epochs",
                    "initial_loss", "final_loss", "heldout_mse", "checksum", "best_epoch"])
        for r in records:
            w.writerow([r.function.value, r.dim, r.landscape.value, r.seed_index, r.n_samples, r.epochs,
                        _num(r.initial_loss), _num(r.final_loss), _num(r.heldout_mse), r.checksum, r.best_epoch])


def table_metadata(table: TableResult) -> dict:
    return {
        "software": "proxyopt",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "dim": table.dim,
        "master_seed": table.settings.master_seed,
        "std": STD_KIND,
        "settings": table.settings.to_dict(),
        "grid": {
            "functions": sorted({r.function.value for r in table.rows}, key=[f.value for f in FUNCTIONS].index),
            "landscapes": list(dict.fromkeys(r.landscape.value for r in table.rows)),
            "optimizers": list(dict.fromkeys(r.optimizer.value for r in table.rows)),
        },
        "seeds": {k: asdict(trial_seeds(table.settings.master_seed, k)) for k in range(table.settings.n_seeds)},
        "errors": [r.error for r in table.rows if r.error],
    }


def write_table_outputs(outdir, table: TableResult) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trials": outdir / "trials.csv",
        "summary": outdir / "summary.csv",
        "table": outdir / "table.csv",
        "training": outdir / "training.csv",
        "metadata": outdir / "metadata.json",
    }
    write_trials_csv(paths["trials"], table.trials)
    write_summary_csv(paths["summary"], table.rows)
    write_table_csv(paths["table"], table.rows)
    write_training_csv(paths["training"], table.training)
    paths["metadata"].write_text(json.dumps(table_metadata(table), indent=2) + "\n")
    return paths


# -- figure data -----------------------------------------------------------


@dataclass
class PointRecord:
    landscape: Landscape
    optimizer: Method
    seed_index: int
    point: np.ndarray
    value: float
    true_value: float
    distance: float


@dataclass
class FigureData:
    function: Benchmark
    landscape: Landscape
    points: list[PointRecord]
    grid_x: np.ndarray
    grid_y: np.ndarray
    true_surface: np.ndarray
    proxy_surface: np.ndarray
    raster_seed_index: int = 0


def raster_lattice(spec: BenchmarkSpec, size: int = RASTER_SIZE):
    if spec.dim != 2:
        raise UnsupportedError(f"landscape rasters need a 2D function, got {spec.dim}D")
    xs = np.linspace(spec.lower[0], spec.upper[0], size)
    ys = np.linspace(spec.lower[1], spec.upper[1], size)
    return np.meshgrid(xs, ys, indexing="ij")


def export_figure_data(function, landscape, settings: Settings | None = None, dim: int = 2,
                       raster_size: int = RASTER_SIZE) -> FigureData:
    """Per-seed solutions on the true function and on the proxy, plus rasters.

    The proxy raster is drawn from the seed-0 network.
    """
    settings = settings or Settings()
    landscape = Landscape(landscape)
    if landscape is Landscape.GROUND_TRUTH:
        raise InvalidParameterError("figure data compares a proxy landscape against the true one")
    spec = settings.spec(function, dim)
    gx, gy = raster_lattice(spec, raster_size)
    lattice = np.column_stack([gx.ravel(), gy.ravel()])

    points = []
    proxy_surface = None
    for k in range(settings.n_seeds):
        report = build_proxy(function, dim, landscape, settings, k)
        if proxy_surface is None:
            proxy_surface = report.model.predict(lattice).reshape(gx.shape)
        opt_seed = trial_seeds(settings.master_seed, k).optimizer
        for ls, objective in ((Landscape.GROUND_TRUTH, Objective.true_function(spec)),
                              (landscape, Objective.proxy(report.model, spec))):
            for m in METHODS:
                res = run_optimizer(m, objective, settings, opt_seed)
                points.append(PointRecord(ls, m, k, res.best_point, res.best_value, float(spec(res.best_point)),
                                          euclidean_distance(res.best_point, spec.global_min_point)))
    return FigureData(Benchmark.parse(function), landscape, points, gx, gy,
                      np.asarray(spec(lattice)).reshape(gx.shape), proxy_surface)


def write_figure_data(outdir, fig: FigureData) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    raster = outdir / "raster.csv"
    with open(raster, "w", newline="") as fh:
        fh.write("x0,x1,true,proxy\n")
        for row in zip(fig.grid_x.ravel(), fig.grid_y.ravel(), fig.true_surface.ravel(), fig.proxy_surface.ravel()):
            fh.write(",".join(_num(v) for v in row) + "\n")
    points = outdir / "points.csv"
    with open(points, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["landscape", "optimizer", "seed", "x0", "x1", "value", "true_value", "distance"])
        for p in fig.points:
            w.writerow([p.landscape.value, p.optimizer.value, p.seed_index, *(_num(v) for v in p.point),
                        _num(p.value), _num(p.true_value), _num(p.distance)])
    return {"raster": raster, "points": points}
