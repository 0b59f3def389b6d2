"""Train one small forecaster end to end and predict the next day.

Uses a deliberately small architecture so the run takes seconds. The
network is built from the same kind of record that the search emits, so
everything here applies unchanged to a search winner.
"""

import numpy as np

from batnas import data, genome as G, network

spec = G.architecture_from_text(
    """
    timesteps 10
    layer recurrent present units=8
    layer recurrent absent
    layer dense present units=4 activation=relu
    layer dense absent
    layer output present units=1 activation=sigmoid
    """
)

records = data.read_augmented_csv("data/sample_augmented.csv")
matrix = data.to_feature_matrix(records, mode="augmented")
train_set, test_set, scaler = data.prepare_supervised(matrix, spec.timesteps)

net = network.build(spec, train_set.feature_count, rng_seed=0)
print(f"{net.parameter_count()} parameters, {train_set.sample_count} training windows")

config = network.TrainConfig(
    epochs=150,
    learning_rate=0.05,
    batch_size=8,
    dropout_rate=0.0,
    l2_lambda=0.0,
    rng_seed=0,
)
net, metrics = network.train(net, train_set, config, val_data=test_set)

h = metrics.train_loss_history
print(f"train loss {h[0]:.4f} -> {h[-1]:.5f} over {len(h)} epochs")
print(f"train RMSE {metrics.final_train_rmse:.4f}, "
      f"held-out RMSE {metrics.validation_rmse:.4f} (scaled units)")

# one-step-ahead forecast from the last window in the file
window = matrix[-spec.timesteps :][None, :, :]
scaled = net.forward(scaler.transform_inputs(window), training=False)
cases = scaler.inverse_transform_targets(scaled)[0]
print(f"\npredicted cases for the day after record {records[-1].index}: {cases:.0f}")
print(f"last observed day had {records[-1].cases} cases")
