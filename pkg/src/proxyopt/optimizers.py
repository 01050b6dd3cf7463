"""Particle swarm and real-coded genetic optimizers over a box.

Both drive an :class:`Objective`, which evaluates either the true benchmark
or a trained proxy network; nothing else in the optimizers depends on which.
A budget of ``iterations`` (PSO) or ``generations`` (GA) counts the random
initial population as the first round, so a budget of 1 only evaluates the
initial population.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from proxyopt.benchmarks import BenchmarkSpec
from proxyopt.errors import InvalidDimensionError, InvalidParameterError
from proxyopt.neuralnet import MlpModel


class ObjectiveKind(str, enum.Enum):
    TRUE_FUNCTION = "true"
    PROXY = "proxy"


class Objective:
    """Landscape to minimize: ``spec`` itself, or ``model`` standing in for it.

    Points must lie inside ``spec``'s box; callers clamp before evaluating.
    """

    def __init__(self, spec: BenchmarkSpec, model: MlpModel | None = None):
        if model is not None and model.input_dim != spec.dim:
            raise InvalidDimensionError(
                f"proxy takes {model.input_dim}D inputs but {spec.name.value} is {spec.dim}D"
            )
        self.spec = spec
        self.model = model

    @classmethod
    def true_function(cls, spec: BenchmarkSpec) -> "Objective":
        return cls(spec)

    @classmethod
    def proxy(cls, model: MlpModel, spec: BenchmarkSpec) -> "Objective":
        return cls(spec, model)

    @property
    def kind(self) -> ObjectiveKind:
        return ObjectiveKind.TRUE_FUNCTION if self.model is None else ObjectiveKind.PROXY

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.spec.lower, self.spec.upper

    def evaluate_many(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise InvalidDimensionError(f"expected an (n, {self.dim}) batch, got shape {x.shape}")
        self.spec.check_domain(x)
        if self.model is None:
            return np.asarray(self.spec(x), dtype=float)
        return self.model.predict(x)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidDimensionError(f"expected a point of shape ({self.dim},), got {x.shape}")
        return float(self.evaluate_many(x[None, :])[0])


def evaluate(objective: Objective, x) -> float:
    return objective.evaluate(x)


@dataclass
class OptResult:
    best_point: np.ndarray
    best_value: float
    trajectory: np.ndarray
    evaluations: int
    seed: int
    method: str = ""


def _check_nonneg(**values):
    for name, v in values.items():
        if not (v >= 0 and math.isfinite(v)):
            raise InvalidParameterError(f"{name} must be a finite non-negative number, got {v}")


# -- particle swarm --------------------------------------------------------


@dataclass
class PsoConfig:
    swarm_size: int = 40
    iterations: int = 200
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    seed: int = 0
    # r1, r2 per coordinate; False draws one scalar pair per particle, which
    # traps the swarm in Rastrigin's local minima far more often
    per_dimension_random: bool = True
    velocity_scale: float = 0.1

    def __post_init__(self):
        if self.swarm_size < 2:
            raise InvalidParameterError(f"swarm_size must be >= 2, got {self.swarm_size}")
        if self.iterations < 1:
            raise InvalidParameterError(f"iterations must be >= 1, got {self.iterations}")
        _check_nonneg(
            inertia=self.inertia,
            cognitive=self.cognitive,
            social=self.social,
            velocity_scale=self.velocity_scale,
        )


@dataclass
class PsoState:
    positions: np.ndarray
    velocities: np.ndarray
    values: np.ndarray
    pbest_positions: np.ndarray
    pbest_values: np.ndarray
    gbest_position: np.ndarray
    gbest_value: float
    iteration: int = 0


def _refresh_gbest(state: PsoState) -> None:
    i = int(np.argmin(state.pbest_values))
    state.gbest_position = state.pbest_positions[i].copy()
    state.gbest_value = float(state.pbest_values[i])


def pso_init(config: PsoConfig, objective: Objective, rng) -> PsoState:
    lo, hi = objective.bounds
    n, d = config.swarm_size, objective.dim
    x = rng.uniform(lo, hi, size=(n, d))
    reach = config.velocity_scale * (hi - lo)
    v = rng.uniform(-reach, reach, size=(n, d))
    y = objective.evaluate_many(x)
    state = PsoState(x, v, y, x.copy(), y.copy(), x[0].copy(), float(y[0]), 0)
    _refresh_gbest(state)
    return state


def pso_step(state: PsoState, config: PsoConfig, objective: Objective, rng) -> PsoState:
    """Advance the swarm by one velocity/position update, in place."""
    x, v = state.positions, state.velocities
    shape = x.shape if config.per_dimension_random else (x.shape[0], 1)
    r1 = rng.random(shape)
    r2 = rng.random(shape)
    v = (
        config.inertia * v
        + config.cognitive * r1 * (state.pbest_positions - x)
        + config.social * r2 * (state.gbest_position - x)
    )
    x = x + v
    lo, hi = objective.bounds
    clamped = (x < lo) | (x > hi)
    x = np.clip(x, lo, hi)
    v[clamped] = 0.0
    y = objective.evaluate_many(x)

    better = y < state.pbest_values
    state.pbest_positions[better] = x[better]
    state.pbest_values[better] = y[better]
    state.positions, state.velocities, state.values = x, v, y
    state.iteration += 1
    _refresh_gbest(state)
    return state


def pso_run(config: PsoConfig, objective: Objective, callback=None) -> OptResult:
    """Minimize ``objective`` with a global-best swarm.

    ``callback(state)`` is called after initialization and after every step.
    """
    rng = np.random.default_rng(config.seed)
    state = pso_init(config, objective, rng)
    trajectory = [state.gbest_value]
    if callback is not None:
        callback(state)
    for _ in range(config.iterations - 1):
        pso_step(state, config, objective, rng)
        trajectory.append(state.gbest_value)
        if callback is not None:
            callback(state)
    return OptResult(
        best_point=state.gbest_position.copy(),
        best_value=state.gbest_value,
        trajectory=np.array(trajectory),
        evaluations=config.swarm_size * config.iterations,
        seed=config.seed,
        method="pso",
    )


# -- genetic algorithm -----------------------------------------------------


@dataclass
class GaConfig:
    population_size: int = 50
    generations: int = 200
    tournament_size: int = 3
    crossover_prob: float = 0.9
    # None means 1/d
    mutation_prob: float | None = None
    mutation_sigma_frac: float = 0.1
    elitism_count: int = 1
    blend_alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise InvalidParameterError(f"population_size must be even and >= 2, got {self.population_size}")
        if self.generations < 1:
            raise InvalidParameterError(f"generations must be >= 1, got {self.generations}")
        if not 1 <= self.tournament_size <= self.population_size:
            raise InvalidParameterError("tournament_size must lie in [1, population_size]")
        if not 0 <= self.elitism_count < self.population_size:
            raise InvalidParameterError("elitism_count must lie in [0, population_size)")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1], got {p}")
        _check_nonneg(mutation_sigma_frac=self.mutation_sigma_frac, blend_alpha=self.blend_alpha)


def _tournament(rng, values: np.ndarray, count: int, size: int) -> np.ndarray:
    entrants = rng.integers(0, values.shape[0], size=(count, size))
    return entrants[np.arange(count), np.argmin(values[entrants], axis=1)]


def ga_run(config: GaConfig, objective: Objective, callback=None) -> OptResult:
    """Minimize ``objective`` with an elitist real-coded GA.

    Tournament selection, BLX-alpha crossover and per-gene Gaussian mutation;
    children are clamped into the box. Fitness is the negated objective, so
    tournaments pick the lowest value. ``callback(generation, population,
    values)`` sees every generation including the initial one.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = objective.bounds
    span = hi - lo
    n, d = config.population_size, objective.dim
    p_mut = 1.0 / d if config.mutation_prob is None else config.mutation_prob
    n_elite = config.elitism_count
    n_children = n - n_elite
    n_pairs = (n_children + 1) // 2

    pop = rng.uniform(lo, hi, size=(n, d))
    values = objective.evaluate_many(pop)
    evaluations = n
    i = int(np.argmin(values))
    best_point, best_value = pop[i].copy(), float(values[i])
    trajectory = [best_value]
    if callback is not None:
        callback(0, pop, values)

    for generation in range(1, config.generations):
        order = np.argsort(values, kind="stable")
        elites = pop[order[:n_elite]]
        elite_values = values[order[:n_elite]]

        parents = _tournament(rng, values, 2 * n_pairs, config.tournament_size)
        a, b = pop[parents[0::2]], pop[parents[1::2]]
        low, high = np.minimum(a, b), np.maximum(a, b)
        stretch = config.blend_alpha * (high - low)
        child_a = rng.uniform(low - stretch, high + stretch)
        child_b = rng.uniform(low - stretch, high + stretch)
        cross = (rng.random(n_pairs) < config.crossover_prob)[:, None]
        child_a = np.where(cross, child_a, a)
        child_b = np.where(cross, child_b, b)
        children = np.stack([child_a, child_b], axis=1).reshape(-1, d)[:n_children]

        mutate = rng.random(children.shape) < p_mut
        noise = rng.normal(0.0, config.mutation_sigma_frac * span, size=children.shape)
        children = np.clip(children + np.where(mutate, noise, 0.0), lo, hi)

        child_values = objective.evaluate_many(children)
        evaluations += n_children
        pop = np.concatenate([elites, children])
        values = np.concatenate([elite_values, child_values])

        i = int(np.argmin(values))
        if values[i] < best_value:
            best_point, best_value = pop[i].copy(), float(values[i])
        trajectory.append(best_value)
        if callback is not None:
            callback(generation, pop, values)

    return OptResult(
        best_point=best_point,
        best_value=best_value,
        trajectory=np.array(trajectory),
        evaluations=evaluations,
        seed=config.seed,
        method="ga",
    )
