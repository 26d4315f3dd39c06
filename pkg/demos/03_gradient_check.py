# %% [markdown]
# # Checking backpropagation through time
#
# Compare the analytic gradients of a small two-layer LSTM against central
# finite differences, parameter by parameter.

# %%
import numpy as np

from windlstm.lstm import NetworkConfig, init_model, network_backward, network_forward

model = init_model(NetworkConfig(input_dim=3, hidden_sizes=(4, 4), dropout_rate=0.0), seed=0)
window = np.random.default_rng(0).normal(size=(5, 3))

_, cache = network_forward(window, model)
grads = network_backward(cache, model, d_prediction=1.0)

eps = 1e-5
for name, value in model.parameters().items():
    value = np.asarray(value, dtype=float)
    numeric = np.zeros(value.size)
    for j in range(value.size):
        params = {k: np.array(v, dtype=float) for k, v in model.parameters().items()}
        params[name].reshape(-1)[j] += eps
        up = network_forward(window, model.with_parameters(params))[0]
        params[name].reshape(-1)[j] -= 2 * eps
        down = network_forward(window, model.with_parameters(params))[0]
        numeric[j] = (up - down) / (2 * eps)
    analytic = np.ravel(grads[name])
    rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    print(f"{name:>12}: {value.size:4d} entries, max relative error {rel.max():.1e}")
