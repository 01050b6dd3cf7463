"""``proxyopt`` command line: sample, train, optimize, table, figure-data.

Settings resolve in increasing precedence: built-in defaults, the JSON file
given by ``--config`` (a plain mapping, or a manifest written by an earlier
run), the ``PROXYOPT_SEED`` environment variable (master seed only), and
explicit flags. Each subcommand writes ``manifest-<command>.json`` into its
output directory holding the fully resolved configuration.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from proxyopt import __version__
from proxyopt.benchmarks import Benchmark, make_spec
from proxyopt.errors import ProxyOptError
from proxyopt.harness import (
    LANDSCAPES,
    METHODS,
    Landscape,
    Settings,
    default_architecture,
    euclidean_distance,
    export_figure_data,
    run_optimizer,
    run_table,
    write_figure_data,
    write_table_outputs,
)
from proxyopt.neuralnet import TrainConfig, build_mlp, load_model, save_model, train
from proxyopt.optimizers import GaConfig, Objective, PsoConfig
from proxyopt.sampling import Scheme, load_sample_set, make_samples, write_samples_csv

log = logging.getLogger("proxyopt")

SEED_ENV = "PROXYOPT_SEED"
TABLE_DIMS = (2, 4, 10)

DEFAULTS = {
    "sample": {
        "function": None, "dim": 2, "scheme": "dense", "n": 10_000, "sigma_frac": 0.1,
        "seed": 0, "bounds": None, "out_dir": ".",
    },
    "train": {
        "samples": None, "function": None, "dim": None, "scheme": "dense", "layers": None,
        "epochs": None, "batch_size": 64, "learning_rate": 1e-3, "seed": 0, "bounds": None, "out_dir": ".",
    },
    "optimize": {
        "function": None, "dim": 2, "opt": "pso", "ground_truth": False, "model": None, "seed": 0,
        "iterations": None, "swarm_size": None, "population_size": None, "bounds": None,
        "pso": {}, "ga": {}, "out_dir": ".",
    },
    "table": {
        "iterations": None, "swarm_size": None, "population_size": None,
        "dim": None, "seeds": 5, "function": None, "landscape": None, "optimizer": None, "seed": 0,
        "jobs": None, "n_samples": 10_000, "sigma_frac": 0.1, "layers": None, "epochs": None,
        "batch_size": 64, "learning_rate": 1e-3, "custom": False, "bounds": {}, "pso": {}, "ga": {},
        "out_dir": ".",
    },
    "figure-data": {
        "iterations": None, "swarm_size": None, "population_size": None,
        "function": None, "dim": 2, "landscape": "dense", "seeds": 5, "seed": 0, "n_samples": 10_000,
        "sigma_frac": 0.1, "layers": None, "epochs": None, "batch_size": 64, "learning_rate": 1e-3,
        "raster": 200, "bounds": {}, "pso": {}, "ga": {}, "out_dir": ".",
    },
}


class UsageError(Exception):
    pass


def _layers(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bounds(text: str) -> list[float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOWER,UPPER, got {text!r}") from None
    return [lo, hi]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    functions = [b.value for b in Benchmark]
    parser = argparse.ArgumentParser(prog="proxyopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"proxyopt {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_help="random seed"):
        p.add_argument("--config", help="JSON config or manifest file")
        p.add_argument("--out-dir", dest="out_dir", default=S)
        p.add_argument("--seed", type=int, default=S, help=seed_help)

    p = sub.add_parser("sample", help="generate a labeled training set")
    common(p)
    p.add_argument("--function", choices=functions, default=S)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=S)
    p.add_argument("--n", type=int, default=S, help="sample budget (dense budget for sparse)")
    p.add_argument("--sigma-frac", dest="sigma_frac", type=float, default=S)
    p.add_argument("--bounds", type=_bounds, default=S, metavar="LOWER,UPPER")

    p = sub.add_parser("train", help="train a proxy network on a samples CSV")
    common(p)
    p.add_argument("--samples", default=S)
    p.add_argument("--function", choices=functions, default=S)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=S)
    p.add_argument("--layers", type=_layers, default=S, metavar="D,H1,...,1")
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--lr", dest="learning_rate", type=float, default=S)
    p.add_argument("--bounds", type=_bounds, default=S, metavar="LOWER,UPPER")

    p = sub.add_parser("optimize", help="run PSO or GA on the true function or a proxy")
    common(p)
    p.add_argument("--function", choices=functions, default=S)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--opt", choices=[m.value for m in METHODS], default=S)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--ground-truth", dest="ground_truth", action="store_true", default=S)
    src.add_argument("--model", default=S)
    p.add_argument("--iterations", type=int, default=S, help="PSO iterations or GA generations")
    p.add_argument("--swarm-size", dest="swarm_size", type=int, default=S)
    p.add_argument("--population-size", dest="population_size", type=int, default=S)
    p.add_argument("--bounds", type=_bounds, default=S, metavar="LOWER,UPPER")

    def grid_flags(p):
        p.add_argument("--n-samples", dest="n_samples", type=int, default=S)
        p.add_argument("--sigma-frac", dest="sigma_frac", type=float, default=S)
        p.add_argument("--layers", type=_layers, default=S, metavar="D,H1,...,1")
        p.add_argument("--epochs", type=int, default=S)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
        p.add_argument("--lr", dest="learning_rate", type=float, default=S)
        p.add_argument("--seeds", type=int, default=S, help="number of seeds per cell")
        p.add_argument("--iterations", type=int, default=S, help="PSO iterations and GA generations")
        p.add_argument("--swarm-size", dest="swarm_size", type=int, default=S)
        p.add_argument("--population-size", dest="population_size", type=int, default=S)

    p = sub.add_parser("table", help="run the experiment grid for one dimension")
    common(p, "master seed")
    grid_flags(p)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--function", action="append", choices=functions, default=S)
    p.add_argument("--landscape", action="append", choices=[x.value for x in LANDSCAPES], default=S)
    p.add_argument("--optimizer", action="append", choices=[m.value for m in METHODS], default=S)
    p.add_argument("--jobs", type=int, default=S)
    p.add_argument("--custom", action="store_true", default=S, help="allow dims other than 2, 4, 10")

    p = sub.add_parser("figure-data", help="export 2D rasters and per-seed solutions")
    common(p, "master seed")
    grid_flags(p)
    p.add_argument("--function", choices=functions, default=S)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--landscape", choices=[x.value for x in LANDSCAPES if x is not Landscape.GROUND_TRUTH],
                   default=S)
    p.add_argument("--raster", type=int, default=S)
    return parser


def _load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if isinstance(data, dict) and isinstance(data.get("config"), dict) and "command" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file, environment and flags for ``command``."""
    config = dict(DEFAULTS[command])
    if args.config:
        data = _load_config_file(args.config)
        unknown = set(data) - set(config)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        config.update(data)
    if SEED_ENV in os.environ:
        try:
            config["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer") from None
    flags = {k: v for k, v in vars(args).items() if k in config}
    config.update(flags)
    return config


def _write_manifest(command, args, config, outputs, started) -> Path:
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "config_file": args.config,
        "config": config,
        "master_seed": config.get("seed"),
        "output_dir": str(out_dir),
        "outputs": [str(p) for p in outputs],
        "started": started,
        "finished": _now(),
    }
    path = out_dir / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _require(config, *keys):
    for key in keys:
        if config.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _spec(config):
    return make_spec(config["function"], config["dim"], config.get("bounds"))


# -- subcommands -----------------------------------------------------------


def cmd_sample(config) -> list[Path]:
    _require(config, "function")
    spec = _spec(config)
    samples = make_samples(spec, config["scheme"], config["n"], config["seed"], config["sigma_frac"])
    out = Path(config["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "samples.csv"
    write_samples_csv(path, samples)
    print(f"wrote {len(samples)} samples to {path}")
    return [path]


def _train_seeds(seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence(int(seed)).generate_state(2)
    return int(a), int(b)


def cmd_train(config) -> list[Path]:
    _require(config, "samples", "function")
    from proxyopt.sampling import read_samples_csv

    if config["dim"] is None:
        config["dim"] = read_samples_csv(config["samples"])[0].shape[1]
    spec = _spec(config)
    samples = load_sample_set(config["samples"], spec, config["scheme"], config["seed"])
    layers, epochs = default_architecture(spec.name, spec.dim)
    if config["layers"] is not None:
        layers = tuple(config["layers"])
    if config["epochs"] is not None:
        epochs = config["epochs"]
    config["layers"], config["epochs"] = list(layers), epochs
    init_seed, shuffle_seed = _train_seeds(config["seed"])
    model = build_mlp(layers, init_seed)
    model, history = train(model, samples, TrainConfig(epochs, config["batch_size"], config["learning_rate"],
                                                       shuffle_seed))
    out = Path(config["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    model_path, loss_path = out / "model.txt", out / "loss_history.csv"
    save_model(model, model_path)
    with open(loss_path, "w") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(history):
            fh.write(f"{i},{v:.17g}\n")
    print(f"trained {list(layers)} for {epochs} epochs, final loss {history[-1]:.6g}; wrote {model_path}")
    return [model_path, loss_path]


def _optimizer_settings(config) -> Settings:
    pso = dict(config.get("pso") or {})
    ga = dict(config.get("ga") or {})
    if config.get("iterations") is not None:
        pso["iterations"] = ga["generations"] = config["iterations"]
    if config.get("swarm_size") is not None:
        pso["swarm_size"] = config["swarm_size"]
    if config.get("population_size") is not None:
        ga["population_size"] = config["population_size"]
    return PsoConfig(**pso), GaConfig(**ga)


def cmd_optimize(config) -> list[Path]:
    _require(config, "function")
    if not config["ground_truth"] and config["model"] is None:
        raise UsageError("one of --ground-truth or --model is required")
    spec = _spec(config)
    pso, ga = _optimizer_settings(config)
    settings = Settings(pso=pso, ga=ga)
    if config["ground_truth"]:
        objective = Objective.true_function(spec)
    else:
        objective = Objective.proxy(load_model(config["model"]), spec)
    res = run_optimizer(config["opt"], objective, settings, config["seed"])
    payload = {
        "function": spec.name.value,
        "dim": spec.dim,
        "landscape": "ground-truth" if config["ground_truth"] else "proxy",
        "optimizer": config["opt"],
        "seed": config["seed"],
        "best_point": [float(v) for v in res.best_point],
        "best_value": res.best_value,
        "true_value": float(spec(res.best_point)),
        "distance": euclidean_distance(res.best_point, spec.global_min_point),
        "evaluations": res.evaluations,
    }
    text = json.dumps(payload, indent=2)
    print(text)
    out = Path(config["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "result.json"
    path.write_text(text + "\n")
    return [path]


def _grid_settings(config) -> Settings:
    pso, ga = _optimizer_settings(config)
    return Settings(
        n_seeds=config["seeds"],
        n_samples=config["n_samples"],
        sigma_frac=config["sigma_frac"],
        layers=None if config["layers"] is None else tuple(config["layers"]),
        epochs=config["epochs"],
        batch_size=config["batch_size"],
        learning_rate=config["learning_rate"],
        pso=pso,
        ga=ga,
        bounds={k: tuple(v) for k, v in (config.get("bounds") or {}).items()},
        master_seed=config["seed"],
    )


def cmd_table(config) -> list[Path]:
    _require(config, "dim")
    if config["dim"] not in TABLE_DIMS and not config["custom"]:
        raise UsageError(f"--dim must be one of {TABLE_DIMS} (or pass --custom)")
    settings = _grid_settings(config)
    jobs = config["jobs"] or os.cpu_count() or 1
    table = run_table(
        config["dim"],
        settings,
        functions=config["function"] or [b.value for b in Benchmark],
        landscapes=config["landscape"] or [x.value for x in LANDSCAPES],
        optimizers=config["optimizer"] or [m.value for m in METHODS],
        jobs=jobs,
    )
    paths = write_table_outputs(config["out_dir"], table)
    for r in table.rows:
        status = f"  [{r.error}]" if r.error else ""
        print(f"{r.landscape.value:>12} {r.function.value:>10} {r.optimizer.value:>3} "
              f"{r.mean_distance:.4f} ± {r.std_distance:.4f}{status}")
    failed = [r for r in table.rows if r.error]
    if failed:
        log.warning("%d row(s) had failures", len(failed))
    return list(paths.values())


def cmd_figure_data(config) -> list[Path]:
    _require(config, "function")
    if config["dim"] != 2:
        raise UsageError("figure-data is only supported for --dim 2")
    settings = _grid_settings(config)
    fig = export_figure_data(config["function"], config["landscape"], settings, 2, config["raster"])
    paths = write_figure_data(config["out_dir"], fig)
    print(f"wrote {paths['raster']} and {paths['points']}")
    return list(paths.values())


COMMANDS = {
    "sample": cmd_sample,
    "train": cmd_train,
    "optimize": cmd_optimize,
    "table": cmd_table,
    "figure-data": cmd_figure_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    command = args.command
    started = _now()
    try:
        config = resolve(command, args)
        # validate eagerly so bad numbers are usage errors, not runtime ones
        if command in ("optimize", "table", "figure-data"):
            _optimizer_settings(config)
        if command in ("table", "figure-data"):
            _grid_settings(config)
        if command in ("sample", "optimize") and config.get("function"):
            _spec(config)
        if command == "train" and config.get("epochs") is not None:
            TrainConfig(config["epochs"], config["batch_size"], config["learning_rate"])
    except (UsageError, ProxyOptError, TypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"proxyopt {command}: error: {exc}", file=sys.stderr)
        return 2
    try:
        outputs = COMMANDS[command](config)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"proxyopt {command}: error: {exc}", file=sys.stderr)
        return 2
    except (ProxyOptError, OSError) as exc:
        print(f"proxyopt {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _write_manifest(command, args, config, outputs, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
