"""Command-line entry point: ``windlstm <command> ...``.

Exit codes: 0 success, 1 runtime or data failure, 2 usage or I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from datetime import datetime
from typing import Optional

import numpy as np

from . import data as D
from .errors import WindLstmError
from .lstm import Framing, NetworkConfig, init_model, load_model, predict, save_model
from .stats import correlation_csv, correlation_report, render_correlation_table
from .trainer import BenchmarkConfig, TrainConfig, benchmark, evaluate, mse_loss, train

log = logging.getLogger("windlstm")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data_path: Optional[str] = None
    out_dir: str = "."
    seed: int = 0
    lookback: int = 12
    horizon: int = 1
    train_frac: float = 0.9
    split: str = "random"
    fit_scope: str = "full"
    strict_gaps: bool = False
    hidden: tuple = (32, 32)
    dropout: float = 0.05
    gate_activation: str = "sigmoid"
    batch_size: int = 40
    epochs: int = 50
    lr: float = 0.001
    clip: Optional[float] = None
    optimizer: str = "adam"
    lasso_lambda: float = 0.1
    ridge_lambda: float = 0.1

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        fields = cls.__dataclass_fields__
        return cls(**{k: getattr(args, k) for k in fields if hasattr(args, k) and getattr(args, k) is not None})

    def network_config(self, input_dim: int) -> NetworkConfig:
        return NetworkConfig(input_dim, self.hidden, self.dropout, self.gate_activation)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs, learning_rate=self.lr,
                           seed=self.seed, gradient_clip_norm=self.clip, optimizer=self.optimizer)

    def dataset(self, series, scaler=None) -> D.Dataset:
        return D.prepare_dataset(series, self.lookback, self.horizon, self.train_frac, self.split,
                                 self.seed, self.fit_scope, self.strict_gaps, scaler=scaler)


# --------------------------------------------------------------------------
# argument parsing

def _hidden(text: str) -> tuple:
    try:
        sizes = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad hidden sizes {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("hidden sizes must be positive integers")
    return sizes


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _bool(text: str) -> bool:
    if isinstance(text, bool):
        return text
    return text.strip().lower() in ("1", "true", "yes", "on")


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_").lstrip("_")] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--out-dir", default=".")
    common.add_argument("-v", "--verbose", action="store_true")

    data_opts = _Parser(add_help=False)
    data_opts.add_argument("--lookback", type=_positive_int, default=12)
    data_opts.add_argument("--horizon", type=_positive_int, default=1)
    data_opts.add_argument("--train-frac", type=float, default=0.9)
    data_opts.add_argument("--split", choices=("random", "chrono"), default="random")
    data_opts.add_argument("--fit-scope", choices=("full", "train"), default="full")
    data_opts.add_argument("--strict-gaps", type=_bool, nargs="?", const=True, default=False)

    model_opts = _Parser(add_help=False)
    model_opts.add_argument("--hidden", type=_hidden, default=(32, 32))
    model_opts.add_argument("--dropout", type=float, default=0.05)
    model_opts.add_argument("--gate-activation", choices=("sigmoid", "relu"), default="sigmoid")
    model_opts.add_argument("--batch-size", type=_positive_int, default=40)
    model_opts.add_argument("--epochs", type=_positive_int, default=50)
    model_opts.add_argument("--lr", type=float, default=0.001)
    model_opts.add_argument("--clip", type=float, default=None)
    model_opts.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")

    base_opts = _Parser(add_help=False)
    base_opts.add_argument("--lasso-lambda", type=float, default=0.1)
    base_opts.add_argument("--ridge-lambda", type=float, default=0.1)

    parser = _Parser(prog="windlstm", description="Multivariate stacked-LSTM wind speed forecasting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic station CSV")
    p.add_argument("--n-steps", type=int, default=8353)
    p.add_argument("--out", help="output CSV (default: <out-dir>/synth.csv)")

    p = sub.add_parser("correlate", parents=[common], help="correlation of each variable with ws10")
    p.add_argument("data")
    p.add_argument("--threshold", type=float, default=0.02)

    p = sub.add_parser("train", parents=[common, data_opts, model_opts], help="train the stacked LSTM")
    p.add_argument("data")

    p = sub.add_parser("evaluate", parents=[common, data_opts], help="score a saved model on the test split")
    p.add_argument("model")
    p.add_argument("data")
    # lookback/horizon default to the values stored in the model
    p.set_defaults(lookback=None, horizon=None)

    p = sub.add_parser("benchmark", parents=[common, data_opts, model_opts, base_opts],
                       help="compare LSTMs against linear and persistence baselines")
    p.add_argument("data")

    p = sub.add_parser("predict", parents=[common], help="next-step forecasts from a saved model")
    p.add_argument("model")
    p.add_argument("data")
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config_file(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        # string defaults are run through each option's type converter
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# --------------------------------------------------------------------------
# commands

def _out(args, name: str) -> str:
    return os.path.join(args.out_dir, name)


def _ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from None


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def _load_series(path: str) -> D.RecordSeries:
    if not os.path.isfile(path):
        raise UsageError(f"input file not found: {path}")
    return D.parse_csv(path)


def _load(path: str):
    if not os.path.isfile(path):
        raise UsageError(f"model file not found: {path}")
    return load_model(path)


def _metrics_lines(name, norm, raw) -> str:
    return "\n".join(["model,mse,rmse,mae,r2,units",
                      norm.csv_row(name, "normalized"), raw.csv_row(name, "m_s")]) + "\n"


def cmd_synth(args) -> int:
    if args.n_steps < 1:
        raise UsageError("--n-steps must be >= 1")
    path = args.out or _out(args, "synth.csv")
    parent = os.path.dirname(path)
    if parent:
        _ensure_dir(parent)
    series = D.synth_generate(args.n_steps, args.seed)
    try:
        D.write_csv(series, path)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None
    print(f"wrote {len(series)} records to {path}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    series = D.drop_missing(_load_series(args.data))
    rows = correlation_report(series, args.threshold)
    _ensure_dir(args.out_dir)
    path = _out(args, "correlation.csv")
    _write_text(path, correlation_csv(rows))
    print(render_correlation_table(rows, args.threshold))
    print(f"n = {len(series)}; report written to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = RunConfig.from_args(args)
    series = _load_series(args.data)
    ds = cfg.dataset(series)
    model = init_model(cfg.network_config(ds.train.n_features), cfg.seed)
    log.info("training on %d windows, testing on %d", len(ds.train), len(ds.test))
    model, history = train(model, ds.train, ds.test, cfg.train_config(),
                           progress=lambda e, a, b: log.info("epoch %d: train %.6g test %.6g", e, a, b))
    model = model.with_framing(Framing(cfg.lookback, cfg.horizon, D.TARGET_COLUMN, ds.scaler))
    _ensure_dir(args.out_dir)
    try:
        save_model(model, _out(args, "model.mslstm"))
    except OSError as exc:
        raise UsageError(f"cannot write model: {exc}") from None
    _write_text(_out(args, "loss_history.csv"), history.to_csv())
    norm, raw = evaluate(model, ds.test, ds.scaler)
    text = _metrics_lines("Stacked LSTMs", norm, raw)
    _write_text(_out(args, "train_metrics.csv"), text)
    print(f"final train loss {history.train_loss[-1]!r}, test loss {history.test_loss[-1]!r}")
    print(text, end="")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load(args.model)
    fr = model.framing
    if fr is None:
        raise WindLstmError("model file carries no data framing; cannot rebuild its inputs")
    if args.lookback is not None and args.lookback != fr.lookback:
        raise WindLstmError(f"dimension mismatch: model was trained with lookback {fr.lookback}, "
                            f"got --lookback {args.lookback}")
    if args.horizon is not None and args.horizon != fr.horizon:
        raise WindLstmError(f"dimension mismatch: model horizon {fr.horizon}, got --horizon {args.horizon}")
    args.lookback, args.horizon = fr.lookback, fr.horizon
    cfg = RunConfig.from_args(args)
    series = _load_series(args.data)
    if fr.scaler.n_columns != len(D.VARIABLES) or model.config.input_dim != len(D.VARIABLES):
        raise WindLstmError("dimension mismatch between model and data columns")
    ds = cfg.dataset(series, scaler=fr.scaler)
    test = ds.test
    norm, raw = evaluate(model, test, fr.scaler)
    _ensure_dir(args.out_dir)
    _write_text(_out(args, "metrics.csv"), _metrics_lines("Stacked LSTMs", norm, raw))
    pred = predict(model, test.inputs)
    y_true = fr.scaler.inverse_column(test.targets, fr.target_column)
    y_pred = fr.scaler.inverse_column(pred, fr.target_column)
    target_rows = test.starts + fr.lookback + fr.horizon - 1
    lines = ["index,y_true,y_pred"]
    lines += [f"{int(i)},{float(a)!r},{float(b)!r}" for i, a, b in zip(target_rows, y_true, y_pred)]
    _write_text(_out(args, "predictions.csv"), "\n".join(lines) + "\n")
    print(f"test loss {mse_loss(model, test)!r}")
    print(_metrics_lines("Stacked LSTMs", norm, raw), end="")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = RunConfig.from_args(args)
    series = _load_series(args.data)
    ds = cfg.dataset(series)
    bcfg = BenchmarkConfig(stacked_hidden=cfg.hidden, single_hidden=cfg.hidden[:1],
                           dropout_rate=cfg.dropout, gate_activation=cfg.gate_activation,
                           train=cfg.train_config(), lasso_lambda=cfg.lasso_lambda,
                           ridge_lambda=cfg.ridge_lambda, model_seed=cfg.seed)
    result = benchmark(ds.train, ds.test, ds.scaler, bcfg)
    _ensure_dir(args.out_dir)
    _write_text(_out(args, "benchmark.csv"), result.to_csv())
    for name, fname in (("LSTM", "loss_history_lstm.csv"), ("Stacked LSTMs", "loss_history_stacked.csv")):
        row = result.row(name)
        if row.history is not None:
            _write_text(_out(args, fname), row.history.to_csv())
    print(f"lasso lambda = {cfg.lasso_lambda:g}, ridge lambda = {cfg.ridge_lambda:g}")
    print(result.render("normalized"))
    print()
    print(result.render("m_s"))
    return EXIT_OK if any(r.ok for r in result.rows) else EXIT_FAIL


def cmd_predict(args) -> int:
    model = _load(args.model)
    fr = model.framing
    if fr is None:
        raise WindLstmError("model file carries no data framing; cannot rebuild its inputs")
    series = D.drop_missing(_load_series(args.data))
    if len(series) < fr.lookback:
        raise D.InsufficientDataError(f"need at least {fr.lookback} complete rows, got {len(series)}")
    scaled = D.transform(series.to_matrix(), fr.scaler).values
    n = len(series) - fr.lookback + 1
    windows = scaled[np.arange(n)[:, None] + np.arange(fr.lookback)[None, :]]
    pred = fr.scaler.inverse_column(predict(model, windows), fr.target_column)
    pred = np.maximum(pred, 0.0)
    step = series.sample_interval * fr.horizon
    stamps = series.timestamps
    lines = ["timestamp,ws10_forecast"]
    for k in range(n):
        ts: datetime = stamps[k + fr.lookback - 1] + step
        lines.append(f"{ts.strftime(D.TIMESTAMP_FORMAT)},{float(pred[k])!r}")
    _ensure_dir(args.out_dir)
    path = _out(args, "forecast.csv")
    _write_text(path, "\n".join(lines) + "\n")
    print(f"wrote {n} forecasts to {path}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "correlate": cmd_correlate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"windlstm: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"windlstm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WindLstmError, ValueError, ArithmeticError) as exc:
        print(f"windlstm: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
