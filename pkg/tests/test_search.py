import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from batnas import bba, data, genome as G, search
from batnas.bba import BbaConfig
from batnas.errors import CheckpointError, ConfigError
from batnas.search import NasConfig

TINY_LAYOUT = G.layout_from_caps((2, 2, 2, 2), 3)


def tiny_config(seed=0, iterations=3, population=3, **overrides):
    kwargs = dict(
        bba=BbaConfig(population_size=population, iterations=iterations, rng_seed=seed),
        layout=TINY_LAYOUT,
        fitness_epochs=3,
        retrain_epochs=4,
        dropout_rate=0.0,
        repetitions=2,
    )
    kwargs.update(overrides)
    return NasConfig(**kwargs)


def tiny_matrix(n=24):
    x = np.arange(n, dtype=float)
    return np.stack([0.5 + 0.4 * np.sin(x / 3.0), x / n], axis=1)


def tiny_spec():
    return G.ArchitectureSpec(
        timesteps=2,
        layers=(
            G.LayerSpec(G.RECURRENT, True, 2),
            G.LayerSpec(G.RECURRENT, False, 1),
            G.LayerSpec(G.DENSE, True, 2, G.RELU),
            G.LayerSpec(G.DENSE, False, 1, G.RELU),
            G.LayerSpec(G.OUTPUT, True, 1, G.SIGMOID),
        ),
    )


# ---------------------------------------------------------------------------
# Seeds and hashing
# ---------------------------------------------------------------------------

def test_eval_seed_pins_hash_construction():
    expected = int.from_bytes(
        hashlib.sha256(b"7:1010").digest()[:8], "big"
    )
    assert search.derive_eval_seed(7, "1010") == expected


def test_eval_seed_sensitivity():
    base = search.derive_eval_seed(7, "1010")
    assert search.derive_eval_seed(7, "1010") == base
    assert search.derive_eval_seed(8, "1010") != base
    assert search.derive_eval_seed(7, "1011") != base
    assert 0 <= base < 2**64


def test_dataset_hash_sensitive_to_shape_and_values():
    m = tiny_matrix()
    assert search.dataset_hash(m) == search.dataset_hash(m.copy())
    assert search.dataset_hash(m) != search.dataset_hash(m.T)
    bumped = m.copy()
    bumped[0, 0] += 1e-9
    assert search.dataset_hash(m) != search.dataset_hash(bumped)


def test_config_hash_includes_run_seed():
    a, b = tiny_config(seed=0), tiny_config(seed=1)
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == tiny_config(seed=0).config_hash()


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------

def test_fitness_deterministic_for_seed():
    config = tiny_config()
    g = G.Genome.from_string("100000000000000", TINY_LAYOUT)
    seed = search.derive_eval_seed(0, g.bitstring())
    a = search.fitness_of(g, tiny_matrix(), config, seed)
    b = search.fitness_of(g, tiny_matrix(), config, seed)
    assert a == b
    assert np.isfinite(a)


def test_fitness_failure_degrades_to_inf():
    config = tiny_config()
    g = G.Genome.from_string("100000000000000", TINY_LAYOUT)
    short = tiny_matrix()[:2]  # too short to frame and split
    assert search.fitness_of(g, short, config, 1) == float("inf")


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def test_config_text_round_trip():
    config = tiny_config(seed=5, batch_size=4, grad_clip_norm=None)
    text = "".join(f"{k} = {v}\n" for k, v in config.to_kv().items())
    parsed = search.parse_nas_config(text, rng_seed=5)
    assert parsed == config
    assert parsed.config_hash() == config.config_hash()


def test_config_rejects_unknown_and_seed_keys():
    with pytest.raises(ConfigError, match="unknown"):
        search.parse_nas_config("population_size = 4\nwingspan = 2\n")
    with pytest.raises(ConfigError, match="seed"):
        search.parse_nas_config("seed = 4\n")


def test_config_unit_caps_validation():
    parsed = search.parse_nas_config("unit_caps = 3, 3, 7, 7\ntimestep_cap = 15\n")
    assert G.genome_length(parsed.layout) == 3 + 2 + 2 + 2 + 3 + 3 + 4
    with pytest.raises(ConfigError, match="unit_caps"):
        search.parse_nas_config("unit_caps = 3,3,7\n")
    with pytest.raises(ConfigError):
        search.parse_nas_config("unit_caps = a,b,c,d\n")


def test_config_none_values():
    parsed = search.parse_nas_config("grad_clip_norm = none\nbatch_size = none\n")
    assert parsed.grad_clip_norm is None
    assert parsed.batch_size is None


def test_config_epoch_ordering_enforced():
    with pytest.raises(ConfigError):
        tiny_config(fitness_epochs=10, retrain_epochs=5)


def test_config_file_loading(tmp_path):
    path = tmp_path / "search.conf"
    path.write_text("# comment\npopulation_size = 4\niterations = 2\n\nfitness_epochs = 1\n")
    config = search.load_nas_config(path, rng_seed=9)
    assert config.bba.population_size == 4
    assert config.bba.rng_seed == 9
    assert config.fitness_epochs == 1


# ---------------------------------------------------------------------------
# Search runs
# ---------------------------------------------------------------------------

def test_run_search_deterministic_and_cache_consistent():
    config = tiny_config()
    first = search.run_search(config, tiny_matrix())
    second = search.run_search(config, tiny_matrix())
    assert first.best_genome.bitstring() == second.best_genome.bitstring()
    assert first.best_fitness == second.best_fitness
    assert first.history == second.history
    pop, iters = config.bba.population_size, config.bba.iterations
    assert first.evaluations + first.cache_hits == pop * (iters + 1)
    assert first.completed_iterations == iters
    # gbest trace never worsens
    fits = [r.best_fitness for r in first.history]
    assert all(b <= a for a, b in zip(fits, fits[1:]))


def test_run_search_concurrent_map_matches_sequential():
    config = tiny_config(iterations=2)
    sequential = search.run_search(config, tiny_matrix())
    with ThreadPoolExecutor(max_workers=4) as pool:
        threaded = search.run_search(config, tiny_matrix(), map_fn=pool.map)
    assert threaded.best_genome.bitstring() == sequential.best_genome.bitstring()
    assert threaded.history == sequential.history


def test_run_search_writes_artifacts(tmp_path):
    config = tiny_config(iterations=2)
    result = search.run_search(config, tiny_matrix(), tmp_path)
    assert (tmp_path / "config").exists()
    assert (tmp_path / "checkpoints" / "search_state.json").exists()
    history = (tmp_path / "history.csv").read_text().splitlines()
    assert history[0] == "iteration,best_fitness,mean_fitness,mean_loudness"
    assert len(history) == 1 + len(result.history)
    assert (tmp_path / "best_genome.txt").read_text().strip() == result.best_genome.bitstring()
    spec_text = (tmp_path / "best_spec.txt").read_text()
    name, parsed = G.parse_architectures(spec_text)[0]
    assert name == "best"
    assert parsed == result.best_spec


def test_run_search_resume_matches_uninterrupted(tmp_path):
    config = tiny_config(iterations=4)
    straight = search.run_search(config, tiny_matrix(), tmp_path / "a")

    partial = search.run_search(config, tiny_matrix(), tmp_path / "b", stop_after=2)
    assert partial.completed_iterations == 2
    assert not (tmp_path / "b" / "best_genome.txt").exists()
    resumed = search.run_search(config, tiny_matrix(), tmp_path / "b")

    assert resumed.best_genome.bitstring() == straight.best_genome.bitstring()
    assert resumed.best_fitness == straight.best_fitness
    assert resumed.history == straight.history
    assert (tmp_path / "a" / "history.csv").read_bytes() == (
        tmp_path / "b" / "history.csv"
    ).read_bytes()


def test_run_search_resume_reuses_cache(tmp_path):
    config = tiny_config(iterations=3)
    search.run_search(config, tiny_matrix(), tmp_path, stop_after=3)
    resumed = search.run_search(config, tiny_matrix(), tmp_path)
    # nothing left to do: no new training at all
    assert resumed.evaluations == 0


def test_run_search_refuses_mismatched_resume(tmp_path):
    config = tiny_config(iterations=2)
    search.run_search(config, tiny_matrix(), tmp_path, stop_after=1)
    with pytest.raises(CheckpointError, match="config"):
        search.run_search(tiny_config(iterations=2, fitness_epochs=2), tiny_matrix(), tmp_path)
    with pytest.raises(CheckpointError, match="dataset"):
        search.run_search(config, tiny_matrix(30), tmp_path)


def test_run_search_rejects_bad_matrix():
    with pytest.raises(Exception):
        search.run_search(tiny_config(), np.zeros((2, 2, 2)))


# ---------------------------------------------------------------------------
# Retraining, comparison, ablation
# ---------------------------------------------------------------------------

def test_retrain_seeds_are_consecutive():
    assert search.retrain_seeds(5, 3) == [5, 6, 7]


def test_retrain_best_runs_each_seed():
    config = tiny_config()
    results = search.retrain_best(tiny_spec(), tiny_matrix(), config, epochs=2)
    assert [r.seed for r in results] == [0, 1]
    for r in results:
        assert r.error is None
        assert len(r.metrics.train_loss_history) == 2
        assert np.isfinite(r.metrics.validation_rmse)
        assert r.scaler is not None


def test_retrain_best_reports_divergence_and_continues():
    config = tiny_config(learning_rate=1e12, grad_clip_norm=None, l2_lambda=0.01)
    results = search.retrain_best(tiny_spec(), tiny_matrix(), config, seeds=[0, 1], epochs=30)
    assert len(results) == 2
    assert all(r.error is not None for r in results)
    assert "diverged" in results[0].error


def test_compare_architectures_identical_specs_tie():
    config = tiny_config()
    rows = search.compare_architectures(
        [("twin_a", tiny_spec()), ("twin_b", tiny_spec())],
        tiny_matrix(),
        config,
        epochs=2,
    )
    assert {r.name for r in rows} == {"twin_a", "twin_b"}
    assert rows[0].per_seed_rmse == rows[1].per_seed_rmse
    assert rows[0].mean_rmse == rows[1].mean_rmse


def test_compare_architectures_ranked_by_mean():
    config = tiny_config()
    big = tiny_spec()
    rows = search.compare_architectures(
        [("a", big), ("b", big), ("c", big)], tiny_matrix(), config, epochs=1
    )
    means = [r.mean_rmse for r in rows]
    assert means == sorted(means)


def test_feature_ablation_smoke():
    import datetime

    base = datetime.date(2020, 3, 2)
    records = []
    for k in range(30):
        records.append(
            data.AugmentedRecord(
                index=k,
                cases=10 + (k % 7),
                c_num=float(k),
                d_type=1 if k % 7 == 5 else 0,
                gathering=1 if k % 7 in (4, 5, 6) else 0,
            )
        )
    config = tiny_config()
    out = search.feature_ablation(tiny_spec(), records, config, seeds=[0], epochs=2)
    assert set(out) == {"augmented", "original"}
    for train_rmse, val_rmse in out.values():
        assert np.isfinite(train_rmse)
        assert np.isfinite(val_rmse)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def test_file_sha256_matches_hashlib(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"abc123")
    assert search.file_sha256(path) == hashlib.sha256(b"abc123").hexdigest()


def test_write_manifest_lists_artifacts(tmp_path):
    import json

    (tmp_path / "one.txt").write_text("1\n")
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "two.txt").write_text("2\n")
    manifest_path = search.write_manifest(
        tmp_path, "train", 7, [tmp_path / "one.txt", tmp_path / "sub" / "two.txt"]
    )
    payload = json.loads(manifest_path.read_text())
    assert payload["command"] == "train"
    assert payload["seed"] == 7
    by_name = {a["path"]: a["sha256"] for a in payload["artifacts"]}
    assert by_name["one.txt"] == search.file_sha256(tmp_path / "one.txt")
    assert by_name["sub/two.txt"] == search.file_sha256(tmp_path / "sub" / "two.txt")
