"""Architecture search orchestration.

Binds the binary bat swarm to the forecaster: each genome is decoded,
the series is framed at the genome's own window length, split 80:20,
scaled, and a fresh network is trained for a fixed epoch budget. The
held-out MSE is the genome's fitness. Fitness values are memoized by
bit pattern and every evaluation is seeded from (run seed, bits), so
repeats, resumes, and concurrent evaluation all agree bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import bba, data, genome, network
from .bba import BbaConfig, HistoryRecord, SwarmState
from .configfile import (
    coerce_bool,
    coerce_float,
    coerce_int,
    load_kv_file,
    parse_kv_text,
    reject_unknown_keys,
)
from .data import FramedDataset, Scaler
from .errors import CheckpointError, ConfigError, DataError, DivergenceError
from .genome import ArchitectureSpec, Genome, GenomeLayout
from .network import Metrics, TrainConfig

logger = logging.getLogger(__name__)

STATE_FILE = "search_state.json"
STATE_VERSION = 1


@dataclass
class NasConfig:
    """Everything one search run needs besides the dataset itself."""

    bba: BbaConfig = field(default_factory=BbaConfig)
    layout: GenomeLayout = field(default_factory=genome.default_layout)
    fitness_epochs: int = 200
    retrain_epochs: int = 2000
    learning_rate: float = 0.01
    dropout_rate: float = 0.8
    dropout_mode: str = "drop"
    l2_lambda: float = 0.01
    grad_clip_norm: float | None = 1.0
    batch_size: int | None = None
    feature_mode: str = "augmented"
    repetitions: int = 3
    split_ratio: float = 0.8
    split_first: bool = False

    def __post_init__(self):
        if self.fitness_epochs < 1:
            raise ConfigError("fitness_epochs must be >= 1")
        if self.retrain_epochs < self.fitness_epochs:
            raise ConfigError("retrain_epochs must be >= fitness_epochs")
        if self.feature_mode not in ("augmented", "original"):
            raise ConfigError("feature_mode must be 'augmented' or 'original'")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must be in (0,1)")
        # surface bad training settings now rather than as +inf fitness later
        self.train_config(rng_seed=0, epochs=self.fitness_epochs)

    def train_config(self, rng_seed: int, epochs: int | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.fitness_epochs if epochs is None else epochs,
            dropout_rate=self.dropout_rate,
            dropout_mode=self.dropout_mode,
            l2_lambda=self.l2_lambda,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            rng_seed=rng_seed,
            grad_clip_norm=self.grad_clip_norm,
        )

    def to_kv(self) -> dict[str, str]:
        """Canonical flat key-value form; doubles as the config-hash input."""
        b = self.bba
        values = {
            "population_size": str(b.population_size),
            "iterations": str(b.iterations),
            "f_min": repr(b.f_min),
            "f_max": repr(b.f_max),
            "initial_loudness": repr(b.initial_loudness),
            "initial_pulse_rate": repr(b.initial_pulse_rate),
            "alpha": repr(b.alpha),
            "gamma": repr(b.gamma),
            "elite_size": str(b.elite_size),
            "unit_caps": ",".join(str(c) for c in self.layout.unit_caps),
            "timestep_cap": str(self.layout.timestep_cap),
            "fitness_epochs": str(self.fitness_epochs),
            "retrain_epochs": str(self.retrain_epochs),
            "learning_rate": repr(self.learning_rate),
            "dropout_rate": repr(self.dropout_rate),
            "dropout_mode": self.dropout_mode,
            "l2_lambda": repr(self.l2_lambda),
            "grad_clip_norm": "none" if self.grad_clip_norm is None else repr(self.grad_clip_norm),
            "batch_size": "none" if self.batch_size is None else str(self.batch_size),
            "feature_mode": self.feature_mode,
            "repetitions": str(self.repetitions),
            "split_ratio": repr(self.split_ratio),
            "split_first": "true" if self.split_first else "false",
        }
        return values

    def config_hash(self) -> str:
        values = dict(self.to_kv())
        values["seed"] = str(self.bba.rng_seed)
        blob = "\n".join(f"{k}={values[k]}" for k in sorted(values))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_NAS_KEYS = {
    "population_size",
    "iterations",
    "f_min",
    "f_max",
    "initial_loudness",
    "initial_pulse_rate",
    "alpha",
    "gamma",
    "elite_size",
    "unit_caps",
    "timestep_cap",
    "fitness_epochs",
    "retrain_epochs",
    "learning_rate",
    "dropout_rate",
    "dropout_mode",
    "l2_lambda",
    "grad_clip_norm",
    "batch_size",
    "feature_mode",
    "repetitions",
    "split_ratio",
    "split_first",
}


def _nas_config_from_kv(values: dict[str, str], source: str, rng_seed: int) -> NasConfig:
    reject_unknown_keys(values, _NAS_KEYS, source)
    if "seed" in values:
        raise ConfigError(f"{source}: the seed comes from the command line, not the config file")

    bba_kwargs: dict = {"rng_seed": rng_seed}
    for key in ("population_size", "iterations", "elite_size"):
        if key in values:
            bba_kwargs[key] = coerce_int(values, key, source)
    for key in ("f_min", "f_max", "initial_loudness", "initial_pulse_rate", "alpha", "gamma"):
        if key in values:
            bba_kwargs[key] = coerce_float(values, key, source)
    bba_config = BbaConfig(**bba_kwargs)

    if "unit_caps" in values or "timestep_cap" in values:
        caps_text = values.get("unit_caps", "31,31,63,63")
        try:
            caps = tuple(int(part.strip()) for part in caps_text.split(","))
        except ValueError as exc:
            raise ConfigError(f"{source}: unit_caps must be comma-separated integers") from exc
        if len(caps) != 4:
            raise ConfigError(f"{source}: unit_caps needs exactly 4 values, got {len(caps)}")
        timestep_cap = coerce_int(values, "timestep_cap", source) if "timestep_cap" in values else 31
        layout = genome.layout_from_caps(caps, timestep_cap)
    else:
        layout = genome.default_layout()

    kwargs: dict = {"bba": bba_config, "layout": layout}
    for key in ("fitness_epochs", "retrain_epochs", "repetitions"):
        if key in values:
            kwargs[key] = coerce_int(values, key, source)
    for key in ("learning_rate", "dropout_rate", "l2_lambda", "split_ratio"):
        if key in values:
            kwargs[key] = coerce_float(values, key, source)
    if "dropout_mode" in values:
        kwargs["dropout_mode"] = values["dropout_mode"]
    if "feature_mode" in values:
        kwargs["feature_mode"] = values["feature_mode"]
    if "split_first" in values:
        kwargs["split_first"] = coerce_bool(values, "split_first", source)
    if "grad_clip_norm" in values:
        if values["grad_clip_norm"].lower() == "none":
            kwargs["grad_clip_norm"] = None
        else:
            kwargs["grad_clip_norm"] = coerce_float(values, "grad_clip_norm", source)
    if "batch_size" in values:
        if values["batch_size"].lower() == "none":
            kwargs["batch_size"] = None
        else:
            kwargs["batch_size"] = coerce_int(values, "batch_size", source)
    return NasConfig(**kwargs)


def load_nas_config(path: str | Path, rng_seed: int = 0) -> NasConfig:
    """Parse a flat key-value search config; unknown keys are errors.

    The seed is not a config key: it arrives separately so one file can
    drive several seeded runs.
    """
    values = load_kv_file(path)
    return _nas_config_from_kv(values, str(path), rng_seed)


def parse_nas_config(text: str, rng_seed: int = 0, source: str = "<string>") -> NasConfig:
    return _nas_config_from_kv(parse_kv_text(text, source), source, rng_seed)


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------

def derive_eval_seed(run_seed: int, bits: str) -> int:
    """Per-genome training seed: stable hash of the run seed and the bits.

    Identical genomes (within or across runs with the same seed) train
    identically, which is what makes the fitness cache exact.
    """
    digest = hashlib.sha256(f"{run_seed}:{bits}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def prepare_for_spec(
    matrix: np.ndarray,
    spec: ArchitectureSpec,
    split_ratio: float,
    split_first: bool,
) -> tuple[FramedDataset, FramedDataset, Scaler]:
    return data.prepare_supervised(matrix, spec.timesteps, split_ratio, split_first)


def fitness_of(
    bat_genome: Genome,
    matrix: np.ndarray,
    config: NasConfig,
    eval_seed: int,
) -> float:
    """Held-out MSE of the decoded architecture; +inf on any failure."""
    try:
        spec = genome.decode(bat_genome)
        train_set, test_set, _ = prepare_for_spec(
            matrix, spec, config.split_ratio, config.split_first
        )
        net = network.build(spec, train_set.feature_count, rng_seed=eval_seed)
        network.train(net, train_set, config.train_config(rng_seed=eval_seed))
        value, _ = network.evaluate(net, test_set)
        return value
    except Exception:
        logger.warning(
            "fitness evaluation failed for genome %s; recording +inf",
            bat_genome.bitstring(),
            exc_info=True,
        )
        return math.inf


# ---------------------------------------------------------------------------
# Search driver
# ---------------------------------------------------------------------------

@dataclass
class NasResult:
    best_genome: Genome
    best_spec: ArchitectureSpec
    best_fitness: float
    history: list[HistoryRecord]
    run_seed: int
    config_hash: str
    dataset_hash: str
    evaluations: int
    cache_hits: int
    completed_iterations: int

    @property
    def best_rmse(self) -> float:
        return math.sqrt(self.best_fitness) if math.isfinite(self.best_fitness) else math.inf


def dataset_hash(matrix: np.ndarray) -> str:
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    h = hashlib.sha256()
    h.update(str(matrix.shape).encode("ascii"))
    h.update(matrix.tobytes())
    return h.hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class _CachedFitness:
    """Memoizes fitness by bit pattern and counts hits and evaluations."""

    def __init__(self, matrix: np.ndarray, config: NasConfig, cache: dict[str, float] | None = None):
        self.matrix = matrix
        self.config = config
        self.cache: dict[str, float] = cache or {}
        self.hits = 0
        self.evaluations = 0

    def __call__(self, bits: np.ndarray) -> float:
        key = "".join(str(int(b)) for b in bits)
        if key in self.cache:
            self.hits += 1
            return self.cache[key]
        self.evaluations += 1
        g = Genome(bits, self.config.layout)
        seed = derive_eval_seed(self.config.bba.rng_seed, key)
        value = fitness_of(g, self.matrix, self.config, seed)
        self.cache[key] = value
        return value


def _state_payload(state: SwarmState, config: NasConfig, ds_hash: str, cache: dict[str, float]) -> dict:
    return {
        "format": "batnas-search-state",
        "version": STATE_VERSION,
        "config_hash": config.config_hash(),
        "dataset_hash": ds_hash,
        "run_seed": config.bba.rng_seed,
        "swarm": bba.state_to_dict(state),
        "cache": {k: (v if math.isfinite(v) else repr(v)) for k, v in cache.items()},
    }


def _load_state_payload(path: Path) -> dict:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read search state {path}: {exc}") from exc
    if payload.get("format") != "batnas-search-state" or payload.get("version") != STATE_VERSION:
        raise CheckpointError(f"{path} is not a supported search state file")
    return payload


def run_search(
    config: NasConfig,
    matrix: np.ndarray,
    out_dir: str | Path | None = None,
    *,
    stop_after: int | None = None,
    map_fn: Callable = map,
    config_text: str | None = None,
) -> NasResult:
    """Run (or resume) a full search over the feature matrix.

    With an ``out_dir``, every completed iteration atomically rewrites the
    swarm state and history.csv, so a killed run resumes at the last
    finished iteration and ends bit-identical to an uninterrupted one.
    ``stop_after`` stops cleanly once that many iterations are complete.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 3:
        raise DataError(f"feature matrix must be 2-d with at least 3 rows, got shape {matrix.shape}")
    ds_hash = dataset_hash(matrix)
    length = genome.genome_length(config.layout)

    state: SwarmState | None = None
    cache: dict[str, float] = {}
    state_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        checkpoints = out_dir / "checkpoints"
        checkpoints.mkdir(parents=True, exist_ok=True)
        state_path = checkpoints / STATE_FILE
        if state_path.exists():
            payload = _load_state_payload(state_path)
            if payload["config_hash"] != config.config_hash():
                raise CheckpointError(
                    f"{state_path} was produced by a different config; refusing to resume"
                )
            if payload["dataset_hash"] != ds_hash:
                raise CheckpointError(
                    f"{state_path} was produced from a different dataset; refusing to resume"
                )
            state = bba.state_from_dict(payload["swarm"])
            cache = {k: (v if isinstance(v, float) else float(v)) for k, v in payload["cache"].items()}
            logger.info("resuming search at iteration %d", state.iteration)
        _atomic_write_text(
            out_dir / "config",
            config_text
            if config_text is not None
            else "".join(f"{k} = {v}\n" for k, v in config.to_kv().items()),
        )

    fitness = _CachedFitness(matrix, config, cache)

    def checkpoint(current: SwarmState) -> None:
        if state_path is None:
            return
        _atomic_write_text(
            state_path,
            json.dumps(_state_payload(current, config, ds_hash, fitness.cache), sort_keys=True),
        )
        bba.write_history_csv(current.history, out_dir / "history.csv")

    if state is None:
        state = bba.init_swarm(config.bba, length, fitness)
        checkpoint(state)

    result = bba.run(
        config.bba,
        length,
        fitness,
        map_fn=map_fn,
        state=state,
        stop_after=stop_after,
        on_iteration=checkpoint,
    )

    best_genome = Genome(result.best_position, config.layout)
    nas_result = NasResult(
        best_genome=best_genome,
        best_spec=genome.decode(best_genome),
        best_fitness=result.best_fitness,
        history=list(result.history),
        run_seed=config.bba.rng_seed,
        config_hash=config.config_hash(),
        dataset_hash=ds_hash,
        evaluations=fitness.evaluations,
        cache_hits=fitness.hits,
        completed_iterations=state.iteration,
    )
    if out_dir is not None and state.iteration >= config.bba.iterations:
        bba.write_history_csv(nas_result.history, out_dir / "history.csv")
        _atomic_write_text(out_dir / "best_genome.txt", best_genome.bitstring() + "\n")
        _atomic_write_text(
            out_dir / "best_spec.txt",
            genome.architecture_to_text(nas_result.best_spec, name="best") + "\n",
        )
    total = fitness.evaluations + fitness.hits
    if total:
        logger.info(
            "search finished: %d evaluations, %d cache hits (%.1f%% hit rate)",
            fitness.evaluations,
            fitness.hits,
            100.0 * fitness.hits / total,
        )
    return nas_result


# ---------------------------------------------------------------------------
# Retraining and comparisons
# ---------------------------------------------------------------------------

@dataclass
class RetrainResult:
    seed: int
    metrics: Metrics
    net: "network.Network"
    scaler: Scaler
    error: str | None = None


def retrain_seeds(run_seed: int, repetitions: int) -> list[int]:
    return [run_seed + offset for offset in range(repetitions)]


def retrain_best(
    spec: ArchitectureSpec,
    matrix: np.ndarray,
    config: NasConfig,
    seeds: Sequence[int] | None = None,
    epochs: int | None = None,
) -> list[RetrainResult]:
    """Train the chosen architecture from scratch once per seed, recording
    per-epoch train and validation losses. A diverging seed is reported in
    its result row; the other seeds still run."""
    if seeds is None:
        seeds = retrain_seeds(config.bba.rng_seed, config.repetitions)
    epochs = config.retrain_epochs if epochs is None else epochs
    results: list[RetrainResult] = []
    for seed in seeds:
        train_set, test_set, scaler = prepare_for_spec(
            matrix, spec, config.split_ratio, config.split_first
        )
        net = network.build(spec, train_set.feature_count, rng_seed=seed)
        try:
            _, metrics = network.train(
                net, train_set, config.train_config(rng_seed=seed, epochs=epochs), val_data=test_set
            )
            results.append(RetrainResult(seed, metrics, net, scaler))
        except DivergenceError as exc:
            partial = Metrics(train_loss_history=[], final_train_rmse=math.nan)
            results.append(
                RetrainResult(seed, partial, net, scaler, error=f"diverged at epoch {exc.epoch}")
            )
    return results


@dataclass
class ComparisonRow:
    name: str
    spec: ArchitectureSpec
    per_seed_rmse: list[float | None]
    errors: list[str | None]

    @property
    def mean_rmse(self) -> float:
        values = [v for v in self.per_seed_rmse if v is not None]
        return float(np.mean(values)) if values else math.inf


def compare_architectures(
    named_specs: Sequence[tuple[str, ArchitectureSpec]],
    matrix: np.ndarray,
    config: NasConfig,
    seeds: Sequence[int] | None = None,
    epochs: int | None = None,
) -> list[ComparisonRow]:
    """Train every spec under identical settings and seeds; report held-out
    RMSE per seed and the mean. Rows sort by mean (diverged-only rows last)."""
    if seeds is None:
        seeds = retrain_seeds(config.bba.rng_seed, config.repetitions)
    epochs = config.fitness_epochs if epochs is None else epochs
    rows: list[ComparisonRow] = []
    for name, spec in named_specs:
        per_seed: list[float | None] = []
        errors: list[str | None] = []
        for seed in seeds:
            try:
                train_set, test_set, _ = prepare_for_spec(
                    matrix, spec, config.split_ratio, config.split_first
                )
                net = network.build(spec, train_set.feature_count, rng_seed=seed)
                network.train(net, train_set, config.train_config(rng_seed=seed, epochs=epochs))
                _, value = network.evaluate(net, test_set)
                per_seed.append(value)
                errors.append(None)
            except Exception as exc:
                per_seed.append(None)
                errors.append(str(exc))
        rows.append(ComparisonRow(name, spec, per_seed, errors))
    rows.sort(key=lambda r: r.mean_rmse)
    return rows


def feature_ablation(
    spec: ArchitectureSpec,
    records: Sequence[data.AugmentedRecord],
    config: NasConfig,
    seeds: Sequence[int] | None = None,
    epochs: int | None = None,
) -> dict[str, tuple[float, float]]:
    """Mean (train RMSE, validation RMSE) for the augmented and original
    feature sets, same seeds for both."""
    if seeds is None:
        seeds = retrain_seeds(config.bba.rng_seed, config.repetitions)
    epochs = config.fitness_epochs if epochs is None else epochs
    out: dict[str, tuple[float, float]] = {}
    for mode in ("augmented", "original"):
        matrix = data.to_feature_matrix(records, mode=mode)
        train_scores: list[float] = []
        val_scores: list[float] = []
        for seed in seeds:
            train_set, test_set, _ = prepare_for_spec(
                matrix, spec, config.split_ratio, config.split_first
            )
            net = network.build(spec, train_set.feature_count, rng_seed=seed)
            _, metrics = network.train(
                net, train_set, config.train_config(rng_seed=seed, epochs=epochs), val_data=test_set
            )
            train_scores.append(metrics.final_train_rmse)
            val_scores.append(metrics.validation_rmse)
        out[mode] = (float(np.mean(train_scores)), float(np.mean(val_scores)))
    return out


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    seed: int | None,
    artifacts: Sequence[str | Path],
    extra: dict | None = None,
) -> Path:
    """Record what a command produced: each artifact with its content hash."""
    out_dir = Path(out_dir)
    entries = []
    for artifact in artifacts:
        artifact = Path(artifact)
        entries.append(
            {
                "path": os.path.relpath(artifact, out_dir),
                "sha256": file_sha256(artifact),
            }
        )
    payload = {
        "command": command,
        "seed": seed,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "artifacts": entries,
    }
    payload.update(extra or {})
    path = out_dir / "manifest"
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
