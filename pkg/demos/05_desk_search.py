"""A miniature architecture search you can watch finish.

Runs the full search loop on the bundled sample with a genome capped to
tiny networks, so every fitness evaluation is a real training run but the
whole thing takes well under a minute. Bigger setups only change the
config numbers; see configs/desk.conf and configs/full.conf.
"""

import math

from batnas import data, genome as G, search
from batnas.bba import BbaConfig
from batnas.search import NasConfig

records = data.read_augmented_csv("data/sample_augmented.csv")
matrix = data.to_feature_matrix(records, mode="augmented")

config = NasConfig(
    bba=BbaConfig(population_size=4, iterations=3, rng_seed=1),
    layout=G.layout_from_caps((4, 4, 8, 8), timestep_cap=7),
    fitness_epochs=25,
    retrain_epochs=25,
    learning_rate=0.05,
    batch_size=8,
    l2_lambda=0.0,
    dropout_rate=0.0,
)

print(f"searching {G.genome_length(config.layout)}-bit genomes "
      f"({config.bba.population_size} bats, {config.bba.iterations} iterations)")
result = search.run_search(config, matrix)

print("\niteration  best held-out MSE")
for record in result.history:
    print(f"{record.iteration:9d}  {record.best_fitness:.6f}")

print(f"\n{result.evaluations} networks trained, {result.cache_hits} cache hits")
print(f"winner (held-out RMSE {math.sqrt(result.best_fitness):.4f}):")
print(G.architecture_to_text(result.best_spec))
