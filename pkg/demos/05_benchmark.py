# %% [markdown]
# # Stacked LSTM against the baselines
#
# Trains a one-layer and a two-layer LSTM (batch 40, 50 epochs, Adam) next to
# the linear models and persistence, on one random 90/10 split of a synthetic
# 8353-step series. Takes a couple of minutes on one core; pass a smaller
# epoch count on the command line for a quick look.

# %%
import sys

from windlstm import data as D
from windlstm.trainer import BenchmarkConfig, TrainConfig, benchmark

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 50
ds = D.prepare_dataset(D.synth_generate(8353, seed=1), seed=1)
result = benchmark(ds.train, ds.test, ds.scaler,
                   BenchmarkConfig(train=TrainConfig(epochs=epochs, seed=1), model_seed=1))
print(result.render("normalized"))
print()
print(result.render("m_s"))

# %% Loss curves, ready for any plotting tool.
history = result.row("Stacked LSTMs").history
print(history.to_csv())
