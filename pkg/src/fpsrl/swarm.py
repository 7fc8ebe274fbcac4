"""Particle swarm optimizer with a ring topology.

Synchronous variant: each iteration first computes every particle's
neighborhood best from the previous iteration's personal bests, then moves
all particles, evaluates them, and finally updates the personal bests.
Velocities are truncated to +-10% of the box width per component and
positions are clamped to the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

Array = np.ndarray

DEFAULT_INERTIA = 0.7298
DEFAULT_ACCEL = 1.49618


@dataclass(frozen=True)
class SwarmConfig:
    """Hyperparameters and search box of one PSO run."""

    x_min: Array
    x_max: Array
    particle_count: int = 100
    iterations: int = 1000
    inertia: float = DEFAULT_INERTIA
    cognitive: float = DEFAULT_ACCEL
    social: float = DEFAULT_ACCEL
    neighborhood_radius: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x_min", np.asarray(self.x_min, dtype=float))
        object.__setattr__(self, "x_max", np.asarray(self.x_max, dtype=float))
        if self.x_min.ndim != 1 or self.x_min.shape != self.x_max.shape:
            raise ContractViolation("x_min and x_max must be equal-length vectors")
        if not np.all(self.x_min < self.x_max):
            raise ContractViolation("need x_min < x_max componentwise")
        if self.particle_count < 1:
            raise ContractViolation("need at least one particle")
        if self.iterations < 0:
            raise ContractViolation("iteration count must be nonnegative")
        if self.cognitive < 0 or self.social < 0:
            raise ContractViolation("acceleration coefficients must be nonnegative")
        if self.neighborhood_radius < 0:
            raise ContractViolation("neighborhood radius must be nonnegative")

    @property
    def dim(self) -> int:
        return self.x_min.size

    @property
    def v_max(self) -> Array:
        return 0.1 * (self.x_max - self.x_min)


@dataclass
class SwarmState:
    """Positions, velocities, and personal bests of the whole swarm."""

    positions: Array          # (N, d)
    velocities: Array         # (N, d)
    best_positions: Array     # (N, d)
    best_fitness: Array       # (N,)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    best_fitness: float       # best personal-best fitness so far
    mean_fitness: float       # mean fitness of this iteration's evaluations


@dataclass
class SwarmResult:
    best_position: Array
    best_fitness: float
    history: list[IterationRecord] = field(default_factory=list)
    state: SwarmState | None = None


def ring_neighbors(n: int, radius: int) -> Array:
    """Index matrix (n, 2*radius+1): particle i and its ring neighbors.

    Rows are sorted ascending, which makes lowest-index tie-breaking a
    stable argmax over the row.
    """
    offsets = np.arange(-radius, radius + 1)
    idx = (np.arange(n)[:, None] + offsets[None, :]) % n
    return np.sort(idx, axis=1)


def neighborhood_best(state: SwarmState, i: int, radius: int = 1) -> Array:
    """Best personal-best position among particle i's ring neighborhood."""
    n = len(state.best_fitness)
    row = ring_neighbors(n, radius)[i]
    best = row[np.argmax(state.best_fitness[row])]
    return state.best_positions[best]


def _neighborhood_best_indices(best_fitness: Array, neighbors: Array) -> Array:
    # argmax returns the first maximum; rows are sorted, so ties pick the
    # lowest particle index
    grid = best_fitness[neighbors]
    return neighbors[np.arange(len(neighbors)), np.argmax(grid, axis=1)]


def velocity_update(
    state: SwarmState,
    neighborhood_positions: Array,
    config: SwarmConfig,
    rng: np.random.Generator,
) -> Array:
    """New truncated velocities for the whole swarm (one fresh draw per entry)."""
    shape = state.positions.shape
    r1 = rng.uniform(size=shape)
    r2 = rng.uniform(size=shape)
    v = (
        config.inertia * state.velocities
        + config.cognitive * r1 * (state.best_positions - state.positions)
        + config.social * r2 * (neighborhood_positions - state.positions)
    )
    vmax = config.v_max
    return np.clip(v, -vmax, vmax)


def position_update(positions: Array, velocities: Array, config: SwarmConfig) -> Array:
    """Move and clamp to the search box."""
    return np.clip(positions + velocities, config.x_min, config.x_max)


def personal_best_update(state: SwarmState, fitness_values: Array) -> SwarmState:
    """Adopt current positions whose fitness strictly improved (in place)."""
    f = _sanitize(fitness_values)
    better = f > state.best_fitness
    state.best_positions[better] = state.positions[better]
    state.best_fitness[better] = f[better]
    return state


def _sanitize(values: Array) -> Array:
    values = np.asarray(values, dtype=float)
    return np.where(np.isfinite(values), values, -np.inf)


def pso_optimize(
    fitness,
    config: SwarmConfig,
    batch_fitness=None,
    progress=None,
    keep_state: bool = False,
) -> SwarmResult:
    """Run the fixed-budget synchronous PSO.

    ``fitness`` maps one position vector to a scalar; evaluation errors and
    non-finite values score -inf so the swarm continues.  ``batch_fitness``,
    when given, evaluates a whole (N, d) population at once and takes
    precedence.  ``progress`` receives each :class:`IterationRecord`.
    """
    n, d = config.particle_count, config.dim
    seeds = np.random.SeedSequence(config.seed).spawn(config.iterations + 1)
    rng = np.random.default_rng(seeds[0])

    positions = rng.uniform(config.x_min, config.x_max, size=(n, d))
    state = SwarmState(
        positions=positions,
        velocities=np.zeros((n, d)),
        best_positions=positions.copy(),
        best_fitness=np.full(n, -np.inf),
    )
    evaluate = _make_evaluator(fitness, batch_fitness)
    neighbors = ring_neighbors(n, config.neighborhood_radius)

    history: list[IterationRecord] = []

    def record(it: int, values: Array):
        rec = IterationRecord(
            iteration=it,
            best_fitness=float(state.best_fitness.max()),
            mean_fitness=float(values.mean()),
        )
        history.append(rec)
        if progress is not None:
            progress(rec)

    values = evaluate(state.positions)
    personal_best_update(state, values)
    record(0, values)

    for it in range(1, config.iterations + 1):
        rng = np.random.default_rng(seeds[it])
        hood = state.best_positions[
            _neighborhood_best_indices(state.best_fitness, neighbors)
        ]
        state.velocities = velocity_update(state, hood, config, rng)
        state.positions = position_update(state.positions, state.velocities, config)
        values = evaluate(state.positions)
        personal_best_update(state, values)
        record(it, values)

    winner = int(np.argmax(state.best_fitness))
    return SwarmResult(
        best_position=state.best_positions[winner].copy(),
        best_fitness=float(state.best_fitness[winner]),
        history=history,
        state=state if keep_state else None,
    )


def _make_evaluator(fitness, batch_fitness):
    if batch_fitness is not None:
        def evaluate(positions: Array) -> Array:
            return _sanitize(batch_fitness(positions))
        return evaluate

    def evaluate(positions: Array) -> Array:
        out = np.empty(len(positions))
        for i, x in enumerate(positions):
            try:
                out[i] = fitness(x)
            except Exception:
                out[i] = -np.inf
        return _sanitize(out)
    return evaluate
