"""Binary bat swarm minimizer over fixed-length bit vectors.

Each swarm member carries a bit-vector position, a real velocity, a
frequency drawn fresh every iteration, a loudness that decays on accepted
moves, and a pulse rate that rises toward its initial value. Velocities
map to per-bit flip probabilities through a v-shaped transfer function,
so the same dynamics that drive the continuous algorithm steer a walk in
Hamming space.

The update loop is phased so fitness evaluations inside one iteration are
independent: all candidates are generated first (against the best position
as of the iteration start), evaluated (sequentially or via a caller-supplied
parallel ``map``), then merged in member order. Results are identical either
way for a fixed seed and a deterministic fitness function.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .configfile import (
    coerce_float,
    coerce_int,
    load_kv_file,
    reject_unknown_keys,
)
from .errors import ConfigError, EvaluationError

logger = logging.getLogger(__name__)

FitnessFn = Callable[[np.ndarray], float]

_TWO_OVER_PI = 2.0 / math.pi
_HALF_PI = math.pi / 2.0
# open upper bound survives arctan(huge) rounding to pi/2
_SUP = np.nextafter(1.0, 0.0)


@dataclass
class BbaConfig:
    """Swarm settings. Defaults follow the standard experimental values
    (loudness 0.25, pulse rate 0.5, alpha = gamma = 0.9, frequency in [0,1])."""

    population_size: int = 10
    iterations: int = 100
    f_min: float = 0.0
    f_max: float = 1.0
    initial_loudness: float = 0.25
    initial_pulse_rate: float = 0.5
    alpha: float = 0.9
    gamma: float = 0.9
    rng_seed: int = 0
    elite_size: int = 1

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.f_min > self.f_max:
            raise ConfigError("f_min must be <= f_max")
        if self.initial_loudness <= 0:
            raise ConfigError("initial_loudness must be > 0")
        if not 0.0 <= self.initial_pulse_rate <= 1.0:
            raise ConfigError("initial_pulse_rate must be in [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if self.elite_size < 1:
            raise ConfigError("elite_size must be >= 1")


_CONFIG_KEYS = {
    "population_size",
    "iterations",
    "f_min",
    "f_max",
    "initial_loudness",
    "initial_pulse_rate",
    "alpha",
    "gamma",
    "rng_seed",
    "elite_size",
}
_INT_KEYS = {"population_size", "iterations", "rng_seed", "elite_size"}


def load_bba_config(path: str | Path) -> BbaConfig:
    """Read a BbaConfig from a flat key-value file; unknown keys are errors."""
    values = load_kv_file(path)
    reject_unknown_keys(values, _CONFIG_KEYS, str(path))
    kwargs = {}
    for key in values:
        if key in _INT_KEYS:
            kwargs[key] = coerce_int(values, key, str(path))
        else:
            kwargs[key] = coerce_float(values, key, str(path))
    return BbaConfig(**kwargs)


@dataclass
class BatState:
    """One swarm member."""

    position: np.ndarray
    velocity: np.ndarray
    frequency: float = 0.0
    loudness: float = 0.25
    pulse_rate: float = 0.5
    initial_pulse_rate: float = 0.5
    fitness: float = math.inf
    evaluated: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.uint8) & 1
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.position.shape != self.velocity.shape:
            raise ValueError("position and velocity must have the same length")


@dataclass(frozen=True)
class HistoryRecord:
    iteration: int
    best_fitness: float
    mean_fitness: float
    mean_loudness: float


@dataclass
class SearchResult:
    best_position: np.ndarray
    best_fitness: float
    history: list[HistoryRecord]


@dataclass
class SwarmState:
    """Everything needed to continue a run: members, incumbent best,
    completed-iteration counter, history, and the generator itself."""

    bats: list[BatState]
    gbest_position: np.ndarray
    gbest_fitness: float
    iteration: int
    history: list[HistoryRecord] = field(default_factory=list)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


def _sanitize(value: float) -> float:
    value = float(value)
    return value if math.isfinite(value) else math.inf


def transfer(v):
    """V-shaped transfer |(2/pi)·arctan((pi/2)·v)|: flip probability in [0, 1).

    Even in ``v``, zero at zero, monotone in |v|. Accepts scalars or arrays;
    non-finite input is rejected.
    """
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("transfer requires finite velocities")
    out = np.minimum(np.abs(_TWO_OVER_PI * np.arctan(_HALF_PI * arr)), _SUP)
    return float(out) if np.isscalar(v) or arr.ndim == 0 else out


def update_frequency(bat: BatState, beta: float, config: BbaConfig) -> float:
    """f = f_min + beta·(f_max − f_min), stored on the bat."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    bat.frequency = config.f_min + beta * (config.f_max - config.f_min)
    return bat.frequency


def update_velocity(bat: BatState, gbest: np.ndarray) -> np.ndarray:
    """v += f·(x − x*) with the per-bit difference in {−1, 0, +1}."""
    gbest = np.asarray(gbest, dtype=np.uint8)
    if gbest.shape != bat.position.shape:
        raise ValueError("gbest length must match position length")
    diff = bat.position.astype(np.float64) - gbest.astype(np.float64)
    bat.velocity = bat.velocity + bat.frequency * diff
    return bat.velocity


def candidate_position(bat: BatState, rng: np.random.Generator) -> np.ndarray:
    """Flip each bit independently with probability transfer(v_j)."""
    probs = transfer(bat.velocity)
    flips = rng.random(bat.position.size) < probs
    return bat.position ^ flips.astype(np.uint8)


def local_search(
    gbest: np.ndarray,
    mean_loudness: float,
    epsilon: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Walk around the best position: flip each bit with probability
    clamp(|epsilon|·mean_loudness, 0, 1)."""
    if mean_loudness < 0:
        raise ValueError("mean loudness must be >= 0")
    p = min(abs(epsilon) * mean_loudness, 1.0)
    gbest = np.asarray(gbest, dtype=np.uint8)
    flips = rng.random(gbest.size) < p
    return gbest ^ flips.astype(np.uint8)


def accept_and_update(
    bat: BatState,
    candidate: np.ndarray,
    candidate_fitness: float,
    gbest_fitness: float,
    iteration: int,
    config: BbaConfig,
    rng: np.random.Generator,
) -> bool:
    """Loudness-gated greedy acceptance against the incumbent best.

    On acceptance the bat adopts the candidate, its loudness decays by
    alpha, and its pulse rate moves to r0·(1 − exp(−gamma·t)). A rejected
    candidate leaves the bat untouched.
    """
    draw = rng.random()
    if draw < bat.loudness and candidate_fitness < gbest_fitness:
        bat.position = np.asarray(candidate, dtype=np.uint8).copy()
        bat.fitness = candidate_fitness
        bat.loudness = config.alpha * bat.loudness
        bat.pulse_rate = bat.initial_pulse_rate * (1.0 - math.exp(-config.gamma * iteration))
        return True
    return False


def init_swarm(
    config: BbaConfig,
    genome_length: int,
    fitness: FitnessFn,
    rng: np.random.Generator | None = None,
) -> SwarmState:
    """Uniform random positions, zero velocities, everything evaluated.

    Any evaluation failure here aborts with the offending bit pattern in the
    message; a half-initialized swarm is useless.
    """
    if genome_length < 1:
        raise ConfigError("genome_length must be >= 1")
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    bats = []
    for _ in range(config.population_size):
        position = rng.integers(0, 2, size=genome_length, dtype=np.uint8)
        bats.append(
            BatState(
                position=position,
                velocity=np.zeros(genome_length),
                loudness=config.initial_loudness,
                pulse_rate=config.initial_pulse_rate,
                initial_pulse_rate=config.initial_pulse_rate,
            )
        )
    for bat in bats:
        try:
            bat.fitness = _sanitize(fitness(bat.position.copy()))
        except Exception as exc:
            bits = "".join(str(int(b)) for b in bat.position)
            raise EvaluationError(f"fitness evaluation failed on genome {bits}: {exc}") from exc
        bat.evaluated = True
    best = min(range(len(bats)), key=lambda i: bats[i].fitness)
    return SwarmState(
        bats=bats,
        gbest_position=bats[best].position.copy(),
        gbest_fitness=bats[best].fitness,
        iteration=0,
        rng=rng,
    )


def _select_elite(state: SwarmState, config: BbaConfig, rng: np.random.Generator) -> np.ndarray:
    if config.elite_size <= 1:
        return state.gbest_position
    ranked = sorted(state.bats, key=lambda b: b.fitness)
    pool = [state.gbest_position] + [b.position for b in ranked]
    pool = pool[: config.elite_size]
    return pool[int(rng.integers(len(pool)))]


def step_swarm(
    state: SwarmState,
    config: BbaConfig,
    fitness: FitnessFn,
    map_fn: Callable = map,
) -> HistoryRecord:
    """Advance the swarm by one iteration; returns the history row.

    Evaluation errors inside the loop degrade to +inf fitness so a single
    bad candidate cannot kill a long search.
    """
    rng = state.rng
    t = state.iteration + 1
    mean_loudness = float(np.mean([b.loudness for b in state.bats]))

    candidates: list[np.ndarray] = []
    for bat in state.bats:
        beta = rng.random()
        update_frequency(bat, beta, config)
        update_velocity(bat, state.gbest_position)
        candidate = candidate_position(bat, rng)
        if rng.random() > bat.pulse_rate:
            epsilon = rng.uniform(-1.0, 1.0)
            around = _select_elite(state, config, rng)
            candidate = local_search(around, mean_loudness, epsilon, rng)
        candidates.append(candidate)

    def safe_eval(bits: np.ndarray) -> float:
        try:
            return _sanitize(fitness(bits.copy()))
        except Exception:
            logger.warning(
                "fitness evaluation failed on %s; recording +inf",
                "".join(str(int(b)) for b in bits),
                exc_info=True,
            )
            return math.inf

    fitnesses = list(map_fn(safe_eval, candidates))

    for bat, candidate, fit in zip(state.bats, candidates, fitnesses):
        accepted = accept_and_update(bat, candidate, fit, state.gbest_fitness, t, config, rng)
        if accepted and bat.fitness < state.gbest_fitness:
            state.gbest_position = bat.position.copy()
            state.gbest_fitness = bat.fitness

    state.iteration = t
    record = HistoryRecord(
        iteration=t,
        best_fitness=state.gbest_fitness,
        mean_fitness=float(np.mean([b.fitness for b in state.bats])),
        mean_loudness=float(np.mean([b.loudness for b in state.bats])),
    )
    state.history.append(record)
    return record


def run(
    config: BbaConfig,
    genome_length: int,
    fitness: FitnessFn,
    *,
    map_fn: Callable = map,
    state: SwarmState | None = None,
    stop_after: int | None = None,
    on_iteration: Callable[[SwarmState], None] | None = None,
) -> SearchResult:
    """Full minimization: init (unless resuming from ``state``), then
    ``config.iterations`` swarm steps. Deterministic for a fixed seed and a
    deterministic fitness function."""
    if state is None:
        state = init_swarm(config, genome_length, fitness)
    while state.iteration < config.iterations:
        if stop_after is not None and state.iteration >= stop_after:
            break
        step_swarm(state, config, fitness, map_fn=map_fn)
        if on_iteration is not None:
            on_iteration(state)
    return SearchResult(
        best_position=state.gbest_position.copy(),
        best_fitness=state.gbest_fitness,
        history=list(state.history),
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_history_csv(history: Iterable[HistoryRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "best_fitness", "mean_fitness", "mean_loudness"])
        for record in history:
            writer.writerow(
                [
                    record.iteration,
                    repr(record.best_fitness),
                    repr(record.mean_fitness),
                    repr(record.mean_loudness),
                ]
            )


def state_to_dict(state: SwarmState) -> dict:
    """JSON-safe snapshot of a swarm, including the generator state."""
    return {
        "iteration": state.iteration,
        "gbest_position": "".join(str(int(b)) for b in state.gbest_position),
        "gbest_fitness": _finite_or_str(state.gbest_fitness),
        "rng_state": state.rng.bit_generator.state,
        "bats": [
            {
                "position": "".join(str(int(b)) for b in bat.position),
                "velocity": [float(v) for v in bat.velocity],
                "frequency": bat.frequency,
                "loudness": bat.loudness,
                "pulse_rate": bat.pulse_rate,
                "initial_pulse_rate": bat.initial_pulse_rate,
                "fitness": _finite_or_str(bat.fitness),
                "evaluated": bat.evaluated,
            }
            for bat in state.bats
        ],
        "history": [
            {
                "iteration": r.iteration,
                "best_fitness": _finite_or_str(r.best_fitness),
                "mean_fitness": _finite_or_str(r.mean_fitness),
                "mean_loudness": r.mean_loudness,
            }
            for r in state.history
        ],
    }


def state_from_dict(payload: dict) -> SwarmState:
    bats = []
    for entry in payload["bats"]:
        bats.append(
            BatState(
                position=np.array([int(c) for c in entry["position"]], dtype=np.uint8),
                velocity=np.array(entry["velocity"], dtype=np.float64),
                frequency=entry["frequency"],
                loudness=entry["loudness"],
                pulse_rate=entry["pulse_rate"],
                initial_pulse_rate=entry["initial_pulse_rate"],
                fitness=_from_finite_or_str(entry["fitness"]),
                evaluated=entry["evaluated"],
            )
        )
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    history = [
        HistoryRecord(
            iteration=r["iteration"],
            best_fitness=_from_finite_or_str(r["best_fitness"]),
            mean_fitness=_from_finite_or_str(r["mean_fitness"]),
            mean_loudness=r["mean_loudness"],
        )
        for r in payload["history"]
    ]
    return SwarmState(
        bats=bats,
        gbest_position=np.array([int(c) for c in payload["gbest_position"]], dtype=np.uint8),
        gbest_fitness=_from_finite_or_str(payload["gbest_fitness"]),
        iteration=payload["iteration"],
        history=history,
        rng=rng,
    )


def _finite_or_str(value: float):
    return value if math.isfinite(value) else repr(value)


def _from_finite_or_str(value) -> float:
    return float(value)
