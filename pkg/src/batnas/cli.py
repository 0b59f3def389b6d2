"""Command-line interface.

Subcommands cover the whole pipeline: ``prepare`` builds the augmented
feature CSV, ``search`` runs the architecture search, ``train`` fits a
given architecture over several seeds, ``forecast`` predicts the next
day from a checkpoint, and ``compare`` benchmarks a list of
architectures. Exit codes: 0 success, 2 usage or config error, 3 data
error, 4 divergence or abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import data, genome, network, search
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    EvaluationError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _load_matrix(path: str, mode: str) -> tuple[np.ndarray, list[data.AugmentedRecord]]:
    records = data.read_augmented_csv(path)
    return data.to_feature_matrix(records, mode=mode), records


def _parse_seed_list(text: str) -> list[int]:
    try:
        seeds = [int(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}: {exc}") from exc
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def _load_config(path: str | None, seed: int) -> search.NasConfig:
    if path is None:
        from .bba import BbaConfig

        return search.NasConfig(bba=BbaConfig(rng_seed=seed))
    return search.load_nas_config(path, rng_seed=seed)


def _select_spec(path: str, name: str | None) -> tuple[str, genome.ArchitectureSpec]:
    text = Path(path).read_text(encoding="utf-8")
    specs = genome.parse_architectures(text, source=path)
    if name is not None:
        for spec_name, spec in specs:
            if spec_name == name:
                return spec_name, spec
        raise ConfigError(f"{path}: no architecture named {name!r}")
    if len(specs) != 1:
        names = ", ".join(n for n, _ in specs)
        raise ConfigError(f"{path} holds {len(specs)} architectures ({names}); pick one with --name")
    return specs[0]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_prepare(args: argparse.Namespace) -> int:
    records = data.ingest(args.ecdc, country=args.country)
    calendar = data.load_holidays(args.holidays)
    if len(calendar) == 0:
        print("warning: holiday file lists no dates; d_type will be all zero", file=sys.stderr)
    augmented = data.augment(records, calendar, index_offset=args.index_offset)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_augmented_csv(augmented, out)
    holidays = sum(r.d_type for r in augmented)
    gatherings = sum(r.gathering for r in augmented)
    print(f"wrote {out} ({len(augmented)} rows, {holidays} holidays, {gatherings} gathering days)")
    search.write_manifest(out.parent, "prepare", None, [out])
    return EXIT_OK


def cmd_search(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    if args.features is not None:
        config.feature_mode = args.features
    matrix, _ = _load_matrix(args.data, config.feature_mode)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_text = Path(args.config).read_text(encoding="utf-8") if args.config else None

    result = search.run_search(
        config,
        matrix,
        out_dir,
        stop_after=args.stop_after,
        config_text=config_text,
    )

    if result.completed_iterations < config.bba.iterations:
        print(
            f"stopped after {result.completed_iterations}/{config.bba.iterations} iterations; "
            f"rerun the same command to resume"
        )
        search.write_manifest(
            out_dir,
            "search",
            args.seed,
            [out_dir / "config", out_dir / "history.csv", out_dir / "checkpoints" / search.STATE_FILE],
            extra={"config_hash": result.config_hash, "dataset_hash": result.dataset_hash,
                   "completed_iterations": result.completed_iterations},
        )
        return EXIT_OK

    print(f"best genome  {result.best_genome.bitstring()}")
    print(genome.architecture_to_text(result.best_spec, name="best"))
    print(f"fitness (held-out MSE)  {result.best_fitness:.6g}")
    print(f"held-out RMSE           {result.best_rmse:.6g}")
    total = result.evaluations + result.cache_hits
    if total:
        print(f"evaluations {result.evaluations}, cache hits {result.cache_hits} "
              f"({100.0 * result.cache_hits / total:.1f}% hit rate)")
    search.write_manifest(
        out_dir,
        "search",
        args.seed,
        [
            out_dir / "config",
            out_dir / "history.csv",
            out_dir / "best_genome.txt",
            out_dir / "best_spec.txt",
            out_dir / "checkpoints" / search.STATE_FILE,
        ],
        extra={"config_hash": result.config_hash, "dataset_hash": result.dataset_hash},
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    if args.features is not None:
        config.feature_mode = args.features
    name, spec = _select_spec(args.spec, args.name)
    matrix, _ = _load_matrix(args.data, config.feature_mode)
    seeds = _parse_seed_list(args.seeds) if args.seeds else search.retrain_seeds(args.seed, config.repetitions)
    if args.epochs is not None and args.epochs < 0:
        raise ConfigError("--epochs must be >= 0")

    out_dir = Path(args.out)
    losses_dir = out_dir / "losses"
    ckpt_dir = out_dir / "checkpoints"
    losses_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    epochs = args.epochs if args.epochs is not None else config.retrain_epochs
    artifacts = []
    train_rmses: list[float] = []
    val_rmses: list[float] = []
    diverged = 0
    for seed in seeds:
        train_set, test_set, scaler = search.prepare_for_spec(
            matrix, spec, config.split_ratio, config.split_first
        )
        net = network.build(spec, train_set.feature_count, rng_seed=seed)
        loss_path = losses_dir / f"seed{seed}.csv"
        ckpt_path = ckpt_dir / f"seed{seed}.ckpt"
        try:
            _, metrics = network.train(
                net, train_set, config.train_config(rng_seed=seed, epochs=epochs), val_data=test_set
            )
        except DivergenceError as exc:
            diverged += 1
            print(f"seed {seed}: diverged at epoch {exc.epoch}", file=sys.stderr)
            continue
        network.write_loss_csv(loss_path, metrics.train_loss_history, metrics.val_loss_history)
        network.save_checkpoint(
            net,
            ckpt_path,
            scaler=scaler,
            meta={"seed": seed, "spec_name": name, "feature_mode": config.feature_mode,
                  "epochs": epochs},
        )
        artifacts.extend([loss_path, ckpt_path])
        train_rmses.append(metrics.final_train_rmse)
        val_rmses.append(metrics.validation_rmse)
        print(f"seed {seed}: train RMSE {metrics.final_train_rmse:.6g}, "
              f"validation RMSE {metrics.validation_rmse:.6g}")

    if train_rmses:
        print(f"mean train RMSE      {float(np.mean(train_rmses)):.6g}")
        print(f"mean validation RMSE {float(np.mean(val_rmses)):.6g}")
    search.write_manifest(out_dir, "train", args.seed, artifacts,
                          extra={"spec": name, "epochs": epochs, "seeds": seeds})
    if diverged == len(seeds):
        raise DivergenceError(0, "training diverged for every seed")
    return EXIT_RUNTIME if diverged else EXIT_OK


def cmd_forecast(args: argparse.Namespace) -> int:
    if args.horizon != 1:
        raise ConfigError("only --horizon 1 is supported (one-step-ahead model)")
    net, scaler, meta = network.load_checkpoint(args.checkpoint)
    if scaler is None:
        raise CheckpointError(f"{args.checkpoint} has no scaler; cannot map data into model space")
    mode = meta.get("feature_mode", "augmented" if net.input_features == 4 else "original")
    matrix, records = _load_matrix(args.data, mode)
    if matrix.shape[1] != net.input_features:
        raise DataError(
            f"feature mismatch: checkpoint expects {net.input_features} features, "
            f"data has {matrix.shape[1]} (mode {mode!r})"
        )
    t = net.timesteps
    if matrix.shape[0] < t:
        raise DataError(f"timestep mismatch: need at least {t} rows, data has {matrix.shape[0]}")
    count = min(args.windows, matrix.shape[0] - t + 1)
    windows = np.stack([matrix[matrix.shape[0] - t - k : matrix.shape[0] - k] for k in range(count)])
    preds = net.forward(scaler.transform_inputs(windows), training=False)
    preds = scaler.inverse_transform_targets(preds)
    last_index = records[-1].index
    lines = ["target_index,predicted_cases"]
    for k in reversed(range(count)):
        lines.append(f"{last_index - k + 1},{repr(float(preds[k]))}")
    output = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(output, encoding="utf-8")
        print(f"wrote {out}")
        search.write_manifest(out.parent, "forecast", None, [out])
    else:
        sys.stdout.write(output)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    if args.features is not None:
        config.feature_mode = args.features
    text = Path(args.specs).read_text(encoding="utf-8")
    named_specs = genome.parse_architectures(text, source=args.specs)
    matrix, _ = _load_matrix(args.data, config.feature_mode)
    seeds = _parse_seed_list(args.seeds) if args.seeds else search.retrain_seeds(args.seed, config.repetitions)

    rows = search.compare_architectures(named_specs, matrix, config, seeds=seeds, epochs=args.epochs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "comparison.csv"
    with table_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "name", "mean_rmse"] + [f"rmse_seed{s}" for s in seeds])
        for rank, row in enumerate(rows, start=1):
            cells = [rank, row.name, "" if not math.isfinite(row.mean_rmse) else repr(row.mean_rmse)]
            for value, error in zip(row.per_seed_rmse, row.errors):
                cells.append(repr(value) if value is not None else f"error: {error}")
            writer.writerow(cells)
    for rank, row in enumerate(rows, start=1):
        mean = f"{row.mean_rmse:.6g}" if math.isfinite(row.mean_rmse) else "all seeds failed"
        print(f"{rank:2d}. {row.name:12s} mean RMSE {mean}")
    search.write_manifest(out_dir, "compare", args.seed, [table_path], extra={"seeds": seeds})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batnas",
        description="Neural architecture search for small case-count forecasters.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build the augmented feature CSV from raw inputs")
    p.add_argument("--ecdc", required=True, help="raw daily-cases CSV (ECDC column layout)")
    p.add_argument("--holidays", required=True, help="holiday list CSV with a 'date' column")
    p.add_argument("--country", default=None, help="country filter (required for multi-country files)")
    p.add_argument("--out", required=True, help="output augmented CSV path")
    p.add_argument("--index-offset", type=int, default=0, help="first row index (default 0)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("search", help="run the architecture search")
    p.add_argument("--data", required=True, help="augmented CSV from 'prepare'")
    p.add_argument("--config", default=None, help="flat key-value search config file")
    p.add_argument("--out", required=True, help="run directory (resumes if a state file exists)")
    p.add_argument("--features", choices=("augmented", "original"), default=None,
                   help="feature set override")
    p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    p.add_argument("--stop-after", type=int, default=None,
                   help="checkpoint and stop once this many iterations are complete")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="train one architecture over several seeds")
    p.add_argument("--data", required=True, help="augmented CSV from 'prepare'")
    p.add_argument("--spec", required=True, help="architecture record file")
    p.add_argument("--name", default=None, help="architecture name inside a multi-spec file")
    p.add_argument("--epochs", type=int, default=None, help="epochs per run (default from config)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--seed", type=int, default=0, help="base seed when --seeds is absent")
    p.add_argument("--config", default=None, help="training hyperparameter config file")
    p.add_argument("--features", choices=("augmented", "original"), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="predict the next day from a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint written by 'train'")
    p.add_argument("--data", required=True, help="augmented CSV covering at least one window")
    p.add_argument("--horizon", type=int, default=1, help="forecast horizon (only 1 is supported)")
    p.add_argument("--windows", type=int, default=1, help="number of trailing windows to predict")
    p.add_argument("--out", default=None, help="write predictions CSV here instead of stdout")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("compare", help="benchmark a list of architectures")
    p.add_argument("--data", required=True, help="augmented CSV from 'prepare'")
    p.add_argument("--specs", required=True, help="file of named architecture records")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (default fitness_epochs)")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--seed", type=int, default=0, help="base seed when --seeds is absent")
    p.add_argument("--config", default=None, help="training hyperparameter config file")
    p.add_argument("--features", choices=("augmented", "original"), default=None)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
