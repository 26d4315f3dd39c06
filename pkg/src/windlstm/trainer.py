"""Mini-batch MSE training with Adam, evaluation and the model comparison."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import baselines
from .data import Scaler, WindowSet
from .errors import DivergenceError, ShapeError, UndefinedR2Error
from .lstm import NetworkConfig, StackedLstmModel, init_model, network_backward, network_forward, predict
from .stats import MetricsReport, metrics

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 40
    epochs: int = 50
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle_each_epoch: bool = True
    gradient_clip_norm: Optional[float] = None
    optimizer: str = "adam"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class LossHistory:
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    n_steps: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,test_loss"]
        for e, (a, b) in enumerate(zip(self.train_loss, self.test_loss), start=1):
            lines.append(f"{e},{a!r},{b!r}")
        return "\n".join(lines) + "\n"


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(np.asarray(p, dtype=float)) for k, p in params.items()},
                   {k: np.zeros_like(np.asarray(p, dtype=float)) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are untouched."""
    if params.keys() != grads.keys():
        raise ShapeError("parameter and gradient names differ")
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=float)
        if g.shape != np.shape(p):
            raise ShapeError(f"gradient for {k} has shape {g.shape}, parameter {np.shape(p)}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        step = config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        new_p[k] = p - step
        new_m[k] = m
        new_v[k] = v
    return new_p, AdamState(new_m, new_v, t)


def _clip(grads: dict, max_norm: float) -> dict:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def mse_loss(model: StackedLstmModel, windows: WindowSet) -> float:
    pred = predict(model, windows.inputs)
    return float(np.mean((pred - windows.targets) ** 2))


def train(model: StackedLstmModel, train_set: WindowSet, test_set: WindowSet,
          config: TrainConfig = TrainConfig(),
          progress: Optional[Callable[[int, float, float], None]] = None):
    """Fit ``model`` to ``train_set`` by mini-batch MSE; returns ``(model, LossHistory)``.

    Shuffles come from ``(seed, 0, epoch)`` and dropout masks from
    ``(seed, 1, epoch, batch)`` seed sequences, so a run is a pure function of
    its inputs. The test set is scored after each epoch for the loss curve only.
    """
    if len(train_set) == 0 or len(test_set) == 0:
        raise ValueError("train and test sets must be nonempty")
    if train_set.n_features != model.config.input_dim:
        raise ShapeError(f"data has {train_set.n_features} features, model expects {model.config.input_dim}")
    n = len(train_set)
    params = model.parameters()
    state = AdamState.zeros_like(params)
    history = LossHistory()
    for epoch in range(config.epochs):
        if config.shuffle_each_epoch:
            order = np.random.default_rng((config.seed, 0, epoch)).permutation(n)
        else:
            order = np.arange(n)
        total = 0.0
        for batch, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            X = train_set.inputs[idx]
            y = train_set.targets[idx]
            rng = np.random.default_rng((config.seed, 1, epoch, batch))
            pred, cache = network_forward(X, model, "train", dropout_seed=rng)
            resid = pred - y
            loss = float(np.mean(resid * resid))
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch + 1}, batch {batch + 1}",
                                      epoch=epoch + 1, batch=batch + 1)
            total += loss * len(idx)
            grads = network_backward(cache, model, 2.0 * resid / len(idx))
            if config.gradient_clip_norm is not None:
                grads = _clip(grads, config.gradient_clip_norm)
            if config.optimizer == "adam":
                params, state = adam_step(params, grads, state, config)
            else:
                params = {k: p - config.learning_rate * grads[k] for k, p in params.items()}
                state.t += 1
            model = model.with_parameters(params)
            params = model.parameters()
        train_loss = total / n
        test_loss = mse_loss(model, test_set)
        if not math.isfinite(test_loss):
            raise DivergenceError(f"non-finite test loss after epoch {epoch + 1}", epoch=epoch + 1)
        history.train_loss.append(train_loss)
        history.test_loss.append(test_loss)
        log.debug("epoch %d train %.6g test %.6g", epoch + 1, train_loss, test_loss)
        if progress is not None:
            progress(epoch + 1, train_loss, test_loss)
    history.n_steps = state.t
    return model, history


def _report(y_true, y_pred) -> MetricsReport:
    try:
        return metrics(y_true, y_pred)
    except UndefinedR2Error as exc:
        return exc.partial


def evaluate_predictions(y_true, y_pred, scaler: Scaler, target_column: int):
    """Metrics on normalized values and after mapping the target back to raw units."""
    norm = _report(y_true, y_pred)
    raw = _report(scaler.inverse_column(y_true, target_column),
                  scaler.inverse_column(y_pred, target_column))
    return norm, raw


def evaluate(model: StackedLstmModel, windows: WindowSet, scaler: Scaler):
    """``(normalized MetricsReport, m/s MetricsReport)`` for eval-mode predictions."""
    if len(windows) == 0:
        raise ValueError("no windows to evaluate")
    pred = predict(model, windows.inputs)
    return evaluate_predictions(windows.targets, pred, scaler, windows.target_column)


# --------------------------------------------------------------------------
# benchmark

MODEL_NAMES = ("Multi. Linear Reg.", "Lasso", "Ridge", "LSTM", "Stacked LSTMs", "Persistence")


@dataclass(frozen=True)
class BenchmarkConfig:
    stacked_hidden: tuple = (32, 32)
    single_hidden: tuple = (32,)
    dropout_rate: float = 0.05
    gate_activation: str = "sigmoid"
    train: TrainConfig = TrainConfig()
    lasso_lambda: float = 0.1
    ridge_lambda: float = 0.1
    model_seed: int = 0


@dataclass
class BenchmarkRow:
    model: str
    normalized: Optional[MetricsReport] = None
    m_s: Optional[MetricsReport] = None
    error: Optional[str] = None
    history: Optional[LossHistory] = None
    test_predictions: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class BenchmarkResult:
    rows: list
    config: BenchmarkConfig
    test_starts: np.ndarray

    def row(self, name: str) -> BenchmarkRow:
        for r in self.rows:
            if r.model == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        lines = ["model,mse,rmse,mae,r2,units"]
        for units in ("normalized", "m_s"):
            for r in self.rows:
                rep = getattr(r, units)
                if rep is None:
                    lines.append(f"{r.model},,,,,{units}")
                else:
                    lines.append(rep.csv_row(r.model, units))
        return "\n".join(lines) + "\n"

    def render(self, units: str = "normalized") -> str:
        return render_table(self.rows, units)


def best_indices(rows, units: str = "normalized") -> dict:
    """Row index of the best value per metric; earliest row wins ties."""
    best = {}
    for metric, better in (("mse", min), ("rmse", min), ("mae", min), ("r2", max)):
        cands = [(i, getattr(getattr(r, units), metric)) for i, r in enumerate(rows)
                 if r.ok and getattr(r, units) is not None
                 and not math.isnan(getattr(getattr(r, units), metric))]
        if not cands:
            continue
        target = better(v for _, v in cands)
        best[metric] = next(i for i, v in cands if v == target)
    return best


def render_table(rows, units: str = "normalized") -> str:
    """Text table with one row per model; ``*`` marks the best value per column."""
    best = best_indices(rows, units)
    name_w = max(len(r.model) for r in rows)
    head = f"{'Model':<{name_w}} | {'MSE':>10} | {'RMSE':>10} | {'MAE':>10} | {'R2':>10}"
    lines = [f"[{units}]", head, "-" * len(head)]
    for i, r in enumerate(rows):
        rep = getattr(r, units)
        if not r.ok or rep is None:
            lines.append(f"{r.model:<{name_w}} | FAILED: {r.error}")
            continue
        cells = []
        for metric in ("mse", "rmse", "mae", "r2"):
            mark = "*" if best.get(metric) == i else " "
            cells.append(f"{getattr(rep, metric):>9.5f}{mark}")
        lines.append(f"{r.model:<{name_w}} | " + " | ".join(cells))
    return "\n".join(lines)


def _fit_lstm(hidden, bcfg, train_set, test_set):
    cfg = NetworkConfig(train_set.n_features, hidden, bcfg.dropout_rate, bcfg.gate_activation)
    model = init_model(cfg, bcfg.model_seed)
    model, history = train(model, train_set, test_set, bcfg.train)
    return predict(model, test_set.inputs), history


def benchmark(train_set: WindowSet, test_set: WindowSet, scaler: Scaler,
              config: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkResult:
    """Fit every comparison model on the same split and score it on the test set."""
    X, y = baselines.flatten(train_set)
    Xt, _ = baselines.flatten(test_set)

    def ols():
        return baselines.linear_predict(baselines.ols_fit(X, y), Xt), None

    def lasso():
        return baselines.linear_predict(baselines.lasso_fit(X, y, config.lasso_lambda), Xt), None

    def ridge():
        return baselines.linear_predict(baselines.ridge_fit(X, y, config.ridge_lambda), Xt), None

    def single():
        return _fit_lstm(config.single_hidden, config, train_set, test_set)

    def stacked():
        return _fit_lstm(config.stacked_hidden, config, train_set, test_set)

    def persistence():
        return baselines.persistence_predict(test_set), None

    rows = []
    for name, fn in zip(MODEL_NAMES, (ols, lasso, ridge, single, stacked, persistence)):
        try:
            pred, history = fn()
            norm, raw = evaluate_predictions(test_set.targets, pred, scaler, test_set.target_column)
            rows.append(BenchmarkRow(name, norm, raw, history=history, test_predictions=pred))
        except Exception as exc:  # a failing model must not sink the others
            log.warning("benchmark row %s failed: %s", name, exc)
            rows.append(BenchmarkRow(name, error=f"{type(exc).__name__}: {exc}"))
    return BenchmarkResult(rows, config, test_set.starts.copy())
