"""A first look at the binary bat swarm on a problem with a known answer.

OneMax-style toy: minimize the number of zero bits in a 24-bit string, so
the unique optimum is all ones with fitness 0. Watching the history shows
the usual swarm signature: loudness falls and the pulse rate rises every
time a bat improves on the incumbent.
"""

import numpy as np

from batnas.bba import BbaConfig, run


def zero_bits(position: np.ndarray) -> float:
    return float(len(position) - position.sum())


config = BbaConfig(population_size=12, iterations=40, rng_seed=7)
result = run(config, genome_length=24, fitness=zero_bits)

print("iteration  best  mean_fitness  mean_loudness")
for record in result.history[::5]:
    print(
        f"{record.iteration:9d}  {record.best_fitness:4.0f}"
        f"  {record.mean_fitness:12.2f}  {record.mean_loudness:13.4f}"
    )

best = "".join(str(int(b)) for b in result.best_position)
print()
print(f"best position {best}")
print(f"zero bits left: {result.best_fitness:.0f}")
