"""Linear comparison models and the persistence forecast.

All baselines see the same lookback windows as the LSTM, flattened row-major
into one feature vector per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import WindowSet
from .errors import ConvergenceError, DomainError, EmptyDatasetError, ShapeError, SingularMatrixError


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    kind: str = "ols"
    lam: float = 0.0
    n_iter: int = 0
    objective_history: list = field(default_factory=list)

    def csv_row(self) -> str:
        return ",".join([self.kind, repr(float(self.lam)), repr(float(self.intercept))]
                        + [repr(float(w)) for w in self.weights])

    @staticmethod
    def csv_header(n_weights: int) -> str:
        return ",".join(["kind", "lambda", "intercept"] + [f"w_{j}" for j in range(n_weights)])


def flatten(windows: WindowSet):
    """``(X, y)`` with row ``i`` the row-major flattening of window ``i``."""
    if len(windows) == 0:
        raise EmptyDatasetError("no windows to flatten")
    n = len(windows)
    return windows.inputs.reshape(n, -1), windows.targets.copy()


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"X {X.shape} and y {y.shape} do not agree")
    if X.shape[0] == 0:
        raise EmptyDatasetError("cannot fit on zero samples")
    return X, y


def _center(X, y, fit_intercept):
    if fit_intercept:
        xm = X.mean(axis=0)
        ym = y.mean()
        return X - xm, y - ym, xm, ym
    return X, y, np.zeros(X.shape[1]), 0.0


def _solve_spd(A, rhs, what):
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise SingularMatrixError(f"{what}: Gram matrix is singular; use ridge_fit with lambda > 0") from None
    diag = np.abs(np.diag(factor[0]))
    if diag.min() <= np.sqrt(np.finfo(float).eps) * diag.max():
        raise SingularMatrixError(f"{what}: Gram matrix is numerically singular; use ridge_fit with lambda > 0")
    return linalg.cho_solve(factor, rhs)


def ols_fit(X, y, fit_intercept: bool = True) -> LinearModel:
    """Least squares via the normal equations and a Cholesky factorization."""
    X, y = _check_xy(X, y)
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    w = _solve_spd(Xc.T @ Xc, Xc.T @ yc, "ols_fit")
    return LinearModel(w, float(ym - xm @ w), "ols", 0.0)


def ridge_fit(X, y, lam: float, fit_intercept: bool = True) -> LinearModel:
    """Solve (XᵀX + lam·I) w = Xᵀy on centered data; the intercept is not penalized."""
    if lam < 0:
        raise DomainError(f"ridge lambda must be >= 0, got {lam}")
    X, y = _check_xy(X, y)
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    A = Xc.T @ Xc + lam * np.eye(X.shape[1])
    w = _solve_spd(A, Xc.T @ yc, "ridge_fit")
    return LinearModel(w, float(ym - xm @ w), "ridge", float(lam))


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(w, G, c, yy, lam):
    """(1/2n)||y - Xw||² + lam·||w||₁ written with G = XᵀX/n, c = Xᵀy/n, yy = yᵀy/n."""
    return 0.5 * (yy - 2.0 * c @ w + w @ G @ w) + lam * np.abs(w).sum()


def lasso_fit(X, y, lam: float, tol: float = 1e-8, max_iter: int = 10000,
              fit_intercept: bool = True) -> LinearModel:
    """Cyclic coordinate descent on standardized columns.

    Minimizes (1/2n)||y - Xs·w - b||² + lam·||w||₁ where Xs has unit-variance
    columns; the returned weights are mapped back to the original scale.
    Constant columns get weight zero.
    """
    if lam < 0:
        raise DomainError(f"lasso lambda must be >= 0, got {lam}")
    X, y = _check_xy(X, y)
    n, p = X.shape
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    scale = np.sqrt((Xc ** 2).mean(axis=0))
    active = scale > 0
    scale_safe = np.where(active, scale, 1.0)
    Xs = Xc / scale_safe
    G = Xs.T @ Xs / n
    c = Xs.T @ yc / n
    yy = float(yc @ yc) / n

    w = np.zeros(p)
    Gw = np.zeros(p)
    history = [lasso_objective(w, G, c, yy, lam)]
    idx = np.flatnonzero(active)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        max_delta = 0.0
        for j in idx:
            old = w[j]
            rho = c[j] - Gw[j] + G[j, j] * old
            new = soft_threshold(rho, lam) / G[j, j]
            if new != old:
                Gw += G[:, j] * (new - old)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        history.append(lasso_objective(w, G, c, yy, lam))
        if max_delta < tol:
            converged = True
            break
    weights = np.where(active, w / scale_safe, 0.0)
    model = LinearModel(weights, float(ym - xm @ weights), "lasso", float(lam), it, history)
    if not converged:
        raise ConvergenceError(f"lasso did not converge in {max_iter} sweeps", last_iterate=model)
    return model


def linear_predict(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.weights.shape[0]:
        raise ShapeError(f"X has {X.shape[1]} columns, model expects {model.weights.shape[0]}")
    return X @ model.weights + model.intercept


def persistence_predict(windows: WindowSet) -> np.ndarray:
    """Last observed target-column value in each window."""
    if len(windows) == 0:
        raise EmptyDatasetError("no windows")
    return windows.inputs[:, -1, windows.target_column].copy()
