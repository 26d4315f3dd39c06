# %% [markdown]
# # Linear baselines on flattened windows
#
# OLS, ridge and lasso all see the 12 x 8 lookback window as a 96-long
# feature vector. Lasso's sparsity grows with lambda.

# %%
import numpy as np

from windlstm import data as D
from windlstm.baselines import flatten, lasso_fit, linear_predict, ols_fit, persistence_predict, ridge_fit
from windlstm.stats import metrics

ds = D.prepare_dataset(D.synth_generate(8353, seed=1), seed=1)
X, y = flatten(ds.train)
Xt, yt = flatten(ds.test)

for name, model in [("ols", ols_fit(X, y)), ("ridge 0.1", ridge_fit(X, y, 0.1))]:
    print(f"{name:>12}: test MSE {metrics(yt, linear_predict(model, Xt)).mse:.5f}")

for lam in (0.0005, 0.005, 0.05, 0.1):
    model = lasso_fit(X, y, lam)
    nz = np.count_nonzero(model.weights)
    print(f"{'lasso ' + str(lam):>12}: test MSE {metrics(yt, linear_predict(model, Xt)).mse:.5f}, "
          f"{nz} nonzero weights, {model.n_iter} sweeps")

print(f"{'persistence':>12}: test MSE {metrics(yt, persistence_predict(ds.test)).mse:.5f}")
