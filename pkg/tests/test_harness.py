import csv
import json
import math

import numpy as np
import pytest

from proxyopt.benchmarks import Benchmark
from proxyopt.errors import InvalidParameterError, ShapeError, UnsupportedError
from proxyopt.harness import (
    ExperimentConfig,
    Landscape,
    Method,
    Settings,
    build_proxy,
    default_architecture,
    euclidean_distance,
    export_figure_data,
    raster_lattice,
    run_table,
    run_trial,
    summarize,
    trial_seeds,
    write_figure_data,
    write_table_outputs,
)
from proxyopt.optimizers import GaConfig, PsoConfig

TINY = Settings(
    n_seeds=2,
    n_samples=100,
    epochs=2,
    pso=PsoConfig(swarm_size=8, iterations=10),
    ga=GaConfig(population_size=8, generations=10),
    master_seed=17,
)


@pytest.mark.parametrize(
    "x, y, expected",
    [([1, 1], [1, 1], 0.0), ([0, 0], [1, 1], math.sqrt(2)), ([0, 0, 0, 0], [1, 1, 1, 1], 2.0)],
)
def test_euclidean_distance(x, y, expected):
    assert euclidean_distance(x, y) == pytest.approx(expected, abs=1e-15)


def test_distance_dimension_mismatch():
    with pytest.raises(ShapeError):
        euclidean_distance([0, 0], [0, 0, 0])


@pytest.mark.parametrize(
    "values, mean, std",
    [([0, 0, 0, 0, 0], 0.0, 0.0), ([1, 1, 1, 1, 3], 1.4, 0.8), ([2], 2.0, 0.0)],
)
def test_summarize(values, mean, std):
    m, s = summarize(values)
    assert m == pytest.approx(mean, abs=1e-12) and s == pytest.approx(std, abs=1e-12)


def test_summarize_empty():
    with pytest.raises(InvalidParameterError):
        summarize([])


def test_default_architectures():
    assert default_architecture("rosenbrock", 2) == ((2, 15, 50, 15, 1), 100)
    assert default_architecture("rosenbrock", 4) == ((4, 15, 50, 15, 10, 1), 100)
    assert default_architecture("rosenbrock", 10) == ((10, 15, 50, 15, 10, 1), 500)
    for f in ("rastrigin", "ackley"):
        for d in (2, 4, 10):
            assert default_architecture(f, d) == ((d, 20, 50, 120, 70, 20, 10, 1), 500)


def test_trial_seeds_are_split_and_stable():
    a = trial_seeds(0, 0)
    assert a == trial_seeds(0, 0)
    assert len({a.sampling, a.training, a.optimizer}) == 3
    assert a != trial_seeds(0, 1) and a != trial_seeds(1, 0)


def test_ground_truth_trial_on_ackley():
    cfg = ExperimentConfig(Benchmark.ACKLEY, 2, Landscape.GROUND_TRUTH, Method.PSO)
    t = run_trial(cfg, 0)
    assert t.distance < 0.05 and t.proxy_checksum is None


def test_budget_one_trial_is_best_initial_point():
    settings = Settings(pso=PsoConfig(iterations=1))
    t = run_trial(ExperimentConfig(Benchmark.RASTRIGIN, 2, Landscape.GROUND_TRUTH, Method.PSO, settings), 0)
    rng = np.random.default_rng(trial_seeds(0, 0).optimizer)
    init = rng.uniform(-5.12, 5.12, size=(40, 2))
    from proxyopt.benchmarks import rastrigin

    best = init[np.argmin(rastrigin(init))]
    assert t.distance == pytest.approx(np.linalg.norm(best))


def test_proxy_trial_and_reuse():
    report = build_proxy("rosenbrock", 2, Landscape.DENSE, TINY, 0)
    assert report.n_samples == 100 and len(report.loss_history) == 2
    cfg = ExperimentConfig(Benchmark.ROSENBROCK, 2, Landscape.DENSE, Method.GA, TINY)
    a = run_trial(cfg, 0)
    b = run_trial(cfg, 0, proxy=report)
    assert a.proxy_checksum == b.proxy_checksum == report.checksum
    assert a.distance == b.distance


def test_errors_are_tagged_with_seed():
    bad = Settings(layers=(3, 4, 1), n_samples=100, epochs=1)
    with pytest.raises(ShapeError, match="seed 1"):
        run_trial(ExperimentConfig(Benchmark.ACKLEY, 2, Landscape.DENSE, Method.PSO, bad), 1)


def test_table_ground_truth_grid():
    t = run_table(2, TINY, landscapes=["ground-truth"])
    assert len(t.rows) == 6
    assert [(r.function.value, r.optimizer.value) for r in t.rows[:2]] == [("rosenbrock", "pso"), ("rosenbrock", "ga")]


def test_full_tiny_table(tmp_path):
    t = run_table(2, TINY)
    assert len(t.rows) == 24
    assert [r.landscape for r in t.rows[::6]] == list(Landscape)
    for r in t.rows:
        assert len(r.distances) == 2 and r.error is None
        m, s = summarize(r.distances)
        assert abs(m - r.mean_distance) <= 1e-12 and abs(s - r.std_distance) <= 1e-12
    # proxy shared by both optimizers for each (function, landscape, seed)
    by_key = {}
    for tr in t.trials:
        if tr.landscape is not Landscape.GROUND_TRUTH:
            by_key.setdefault((tr.function, tr.landscape, tr.seed_index), set()).add(tr.proxy_checksum)
    assert len(by_key) == 3 * 3 * 2 and all(len(v) == 1 for v in by_key.values())
    assert len(t.training) == 18

    paths = write_table_outputs(tmp_path, t)
    rows = list(csv.DictReader(open(paths["trials"])))
    assert list(rows[0]) == ["function", "dim", "landscape", "optimizer", "seed", "distance", "best_value",
                             "evaluations"]
    assert len(rows) == 48
    assert len(list(csv.DictReader(open(paths["summary"])))) == 24
    table = list(csv.reader(open(paths["table"])))
    assert table[0][0] == "landscape" and len(table) == 5 and "±" in table[1][1]
    meta = json.loads(paths["metadata"].read_text())
    assert meta["master_seed"] == 17 and meta["std"] == "population"
    assert Settings.from_dict(meta["settings"]) == TINY


def test_table_is_reproducible():
    small = Settings(n_seeds=2, n_samples=64, epochs=1, pso=PsoConfig(iterations=5), ga=GaConfig(generations=5))
    a = run_table(2, small, functions=["rastrigin"], landscapes=["dense", "gaussian"])
    b = run_table(2, small, functions=["rastrigin"], landscapes=["dense", "gaussian"])
    assert [t.distance for t in a.trials] == [t.distance for t in b.trials]


def test_table_parallel_matches_sequential():
    small = Settings(n_seeds=2, n_samples=64, epochs=1, pso=PsoConfig(iterations=5), ga=GaConfig(generations=5))
    a = run_table(2, small, functions=["ackley"], landscapes=["sparse"])
    b = run_table(2, small, functions=["ackley"], landscapes=["sparse"], jobs=2)
    assert [t.distance for t in a.trials] == [t.distance for t in b.trials]


def test_partial_failure_marks_row():
    bad = Settings(n_seeds=1, n_samples=2, epochs=1)  # too few points for a 2D grid
    t = run_table(2, bad, functions=["rastrigin"], landscapes=["ground-truth", "dense"])
    gt, dense_pso = t.rows[0], t.rows[2]
    assert gt.error is None
    assert dense_pso.error and "InsufficientSamplesError" in dense_pso.error
    assert math.isnan(dense_pso.mean_distance)


def test_figure_data(tmp_path):
    fig = export_figure_data("rosenbrock", "dense", TINY, raster_size=20)
    proxy_pts = [p for p in fig.points if p.landscape is Landscape.DENSE]
    assert sorted((p.optimizer.value, p.seed_index) for p in proxy_pts) == [
        ("ga", 0), ("ga", 1), ("pso", 0), ("pso", 1)]
    assert len(fig.points) == 8
    assert fig.true_surface.shape == fig.proxy_surface.shape == (20, 20)
    for p in fig.points:
        assert np.all(np.abs(p.point) <= 2.048)
    paths = write_figure_data(tmp_path, fig)
    raster = list(csv.reader(open(paths["raster"])))
    assert raster[0] == ["x0", "x1", "true", "proxy"] and len(raster) == 401
    gx, gy = raster_lattice(TINY.spec("rosenbrock", 2), 20)
    assert np.array_equal(gx, fig.grid_x) and np.array_equal(gy, fig.grid_y)


def test_figure_data_refuses_high_dim():
    with pytest.raises(UnsupportedError):
        export_figure_data("ackley", "dense", TINY, dim=4)
