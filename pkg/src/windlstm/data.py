"""Station data ingestion, cleaning, min-max scaling and supervised windowing."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import BinaryIO, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    CsvParseError,
    EmptyDatasetError,
    InsufficientDataError,
    OrderingError,
    SchemaError,
    ShapeError,
    SplitError,
)

VARIABLES = ("ws10", "wdir", "temp", "rh", "press", "dewpt", "ws2", "srad")
CSV_HEADER = ("timestamp",) + VARIABLES
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"
SAMPLE_INTERVAL = timedelta(minutes=5)
TARGET_COLUMN = VARIABLES.index("ws10")


@dataclass(frozen=True)
class MeteoRecord:
    """One observation; any variable may be ``None`` (missing)."""

    timestamp: datetime
    ws10: Optional[float] = None
    wdir: Optional[float] = None
    temp: Optional[float] = None
    rh: Optional[float] = None
    press: Optional[float] = None
    dewpt: Optional[float] = None
    ws2: Optional[float] = None
    srad: Optional[float] = None

    def values(self) -> tuple:
        return tuple(getattr(self, name) for name in VARIABLES)

    @property
    def complete(self) -> bool:
        return all(v is not None for v in self.values())


@dataclass
class RecordSeries:
    records: list
    sample_interval: timedelta = SAMPLE_INTERVAL

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def timestamps(self) -> list:
        return [r.timestamp for r in self.records]

    def to_matrix(self) -> np.ndarray:
        """T x 8 float matrix in ``VARIABLES`` order; missing values become NaN."""
        out = np.full((len(self.records), len(VARIABLES)), np.nan)
        for i, rec in enumerate(self.records):
            for j, v in enumerate(rec.values()):
                if v is not None:
                    out[i, j] = v
        return out

    def column(self, name: str) -> np.ndarray:
        return self.to_matrix()[:, VARIABLES.index(name)]


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (bytes, bytearray)):
        return io.TextIOWrapper(io.BytesIO(source), encoding="utf-8", newline="")
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_csv(source: Union[BinaryIO, bytes, str, os.PathLike]) -> RecordSeries:
    """Read station CSV (``timestamp,ws10,wdir,temp,rh,press,dewpt,ws2,srad``).

    ``source`` may be a binary stream, raw bytes or a filesystem path. Empty
    cells are read as missing values.
    """
    stream = _open_text(source)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file: header row expected") from None
    header = [h.strip() for h in header]
    for name in CSV_HEADER:
        if name not in header:
            raise SchemaError(f"missing column {name!r} in header")
    pos = {name: header.index(name) for name in CSV_HEADER}

    records = []
    prev = None
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        ts_text = row[pos["timestamp"]].strip()
        try:
            ts = datetime.strptime(ts_text, TIMESTAMP_FORMAT)
        except ValueError:
            raise CsvParseError(
                f"row {lineno}, column 'timestamp': bad timestamp {ts_text!r}",
                row=lineno, column="timestamp") from None
        if prev is not None and ts <= prev:
            raise OrderingError(f"row {lineno}: timestamp {ts_text} does not increase")
        prev = ts
        values = {}
        for name in VARIABLES:
            cell = row[pos[name]].strip()
            if cell == "":
                values[name] = None
                continue
            try:
                v = float(cell)
            except ValueError:
                raise CsvParseError(
                    f"row {lineno}, column {name!r}: non-numeric value {cell!r}",
                    row=lineno, column=name) from None
            if not math.isfinite(v):
                raise CsvParseError(
                    f"row {lineno}, column {name!r}: non-finite value {cell!r}",
                    row=lineno, column=name)
            values[name] = v
        records.append(MeteoRecord(ts, **values))
    return RecordSeries(records)


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def write_csv(series: RecordSeries, dest) -> None:
    """Write ``series`` in the same schema :func:`parse_csv` reads.

    Floats are written with ``repr`` so a parse round trip is lossless.
    """
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in series.records:
            writer.writerow([rec.timestamp.strftime(TIMESTAMP_FORMAT)]
                            + [_fmt(v) for v in rec.values()])
    finally:
        if own:
            fh.close()


def drop_missing(series: RecordSeries) -> RecordSeries:
    """Delete every record with at least one missing variable."""
    kept = [r for r in series.records if r.complete]
    if not kept:
        raise EmptyDatasetError("no complete records left after dropping missing values")
    return RecordSeries(kept, series.sample_interval)


# --------------------------------------------------------------------------
# scaling

@dataclass(frozen=True)
class Scaler:
    v_min: np.ndarray
    v_max: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.v_max == self.v_min

    @property
    def n_columns(self) -> int:
        return len(self.v_min)

    def _check(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.n_columns:
            raise ShapeError(
                f"expected a matrix with {self.n_columns} columns, got shape {values.shape}")
        return values

    def inverse_column(self, values, column: int) -> np.ndarray:
        """Map normalized values of a single column back to raw units."""
        values = np.asarray(values, dtype=float)
        lo, hi = self.v_min[column], self.v_max[column]
        if lo == hi:
            return np.full_like(values, lo)
        return values * (hi - lo) + lo

    def __eq__(self, other):
        return (isinstance(other, Scaler)
                and np.array_equal(self.v_min, other.v_min)
                and np.array_equal(self.v_max, other.v_max))


@dataclass
class ScaledMatrix:
    values: np.ndarray
    column_names: tuple
    scaler: Scaler

    @property
    def shape(self):
        return self.values.shape


def fit_scaler(matrix) -> Scaler:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {matrix.shape}")
    if matrix.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a scaler on zero rows")
    return Scaler(matrix.min(axis=0), matrix.max(axis=0))


def transform(matrix, scaler: Scaler, column_names: Sequence[str] = VARIABLES) -> ScaledMatrix:
    """Min-max normalize each column; degenerate columns map to 0."""
    matrix = scaler._check(matrix)
    span = scaler.v_max - scaler.v_min
    safe = np.where(scaler.degenerate, 1.0, span)
    out = (matrix - scaler.v_min) / safe
    out[:, scaler.degenerate] = 0.0
    if len(column_names) != scaler.n_columns:
        column_names = tuple(f"x{j}" for j in range(scaler.n_columns))
    return ScaledMatrix(out, tuple(column_names), scaler)


def inverse_transform(values, scaler: Scaler) -> np.ndarray:
    if isinstance(values, ScaledMatrix):
        values = values.values
    values = scaler._check(values)
    # degenerate columns come back as their constant value
    return values * (scaler.v_max - scaler.v_min) + scaler.v_min


# --------------------------------------------------------------------------
# windowing and splitting

@dataclass
class WindowSet:
    """Supervised samples: ``inputs[i]`` is a (lookback, d) window, ``targets[i]``
    the normalized target value ``horizon`` steps after the window ends.

    ``starts[i]`` is the row index of the first row of window ``i`` in the
    matrix the windows were cut from.
    """

    inputs: np.ndarray
    targets: np.ndarray
    lookback: int
    horizon: int = 1
    target_column: int = TARGET_COLUMN
    starts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.starts is None:
            self.starts = np.arange(len(self.targets))
        if self.inputs.ndim != 3 or self.inputs.shape[1] != self.lookback:
            raise ShapeError(f"inputs must be (n, {self.lookback}, d), got {self.inputs.shape}")
        if len(self.inputs) != len(self.targets):
            raise ShapeError("inputs and targets differ in length")

    def __len__(self):
        return len(self.targets)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]

    def subset(self, index) -> "WindowSet":
        index = np.asarray(index, dtype=int)
        return WindowSet(self.inputs[index], self.targets[index], self.lookback,
                         self.horizon, self.target_column, self.starts[index])


def make_windows(scaled, lookback: int = 12, horizon: int = 1,
                 target_column: int = TARGET_COLUMN,
                 timestamps: Optional[Sequence[datetime]] = None,
                 interval: timedelta = SAMPLE_INTERVAL) -> WindowSet:
    """Cut sliding windows out of a (T, d) matrix.

    Sample ``i`` covers rows ``i .. i+lookback-1`` and its target is
    ``values[i+lookback+horizon-1, target_column]``. When ``timestamps`` is
    given (strict mode), windows whose span crosses a gap larger than
    ``interval`` are left out.
    """
    values = scaled.values if isinstance(scaled, ScaledMatrix) else np.asarray(scaled, dtype=float)
    if lookback < 1 or horizon < 1:
        raise ValueError("lookback and horizon must be positive")
    T = values.shape[0]
    if T < lookback + horizon:
        raise InsufficientDataError(
            f"need at least lookback + horizon = {lookback + horizon} rows, got {T}")
    n = T - lookback - horizon + 1
    starts = np.arange(n)
    if timestamps is not None:
        if len(timestamps) != T:
            raise ShapeError("timestamps length differs from matrix rows")
        gap = np.array([timestamps[k + 1] - timestamps[k] != interval for k in range(T - 1)],
                       dtype=int)
        # a window plus its target spans lookback + horizon rows, i.e. that many - 1 steps
        span = lookback + horizon - 1
        cum = np.concatenate([[0], np.cumsum(gap)])
        starts = starts[cum[starts + span] - cum[starts] == 0]
        if len(starts) == 0:
            raise InsufficientDataError("no gap-free window fits in the data")
    offsets = np.arange(lookback)
    inputs = values[starts[:, None] + offsets[None, :]]
    targets = values[starts + lookback + horizon - 1, target_column]
    return WindowSet(inputs, targets, lookback, horizon, target_column, starts)


def split_indices(n: int, train_fraction: float = 0.9, mode: str = "random",
                  seed: int = 0) -> tuple:
    """Index arrays ``(train, test)`` for ``n`` samples; see :func:`split`."""
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(math.floor(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise SplitError(f"split of {n} windows at {train_fraction} leaves an empty partition")
    if mode == "random":
        order = np.random.default_rng(seed).permutation(n)
    elif mode in ("chronological", "chrono"):
        order = np.arange(n)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return order[:n_train], order[n_train:]


def split(windows: WindowSet, train_fraction: float = 0.9, mode: str = "random",
          seed: int = 0) -> tuple:
    """Partition windows into (train, test).

    ``random`` draws a seeded uniform permutation and takes the first
    ``floor(n * train_fraction)`` as training samples; ``chronological``
    (alias ``chrono``) keeps time order and holds out the tail.
    """
    train_idx, test_idx = split_indices(len(windows), train_fraction, mode, seed)
    return windows.subset(train_idx), windows.subset(test_idx)


@dataclass
class Dataset:
    train: WindowSet
    test: WindowSet
    scaler: Scaler
    series: RecordSeries


def prepare_dataset(series: RecordSeries, lookback: int = 12, horizon: int = 1,
                    train_fraction: float = 0.9, split_mode: str = "random", seed: int = 0,
                    fit_scope: str = "full", strict_gaps: bool = False,
                    scaler: Optional[Scaler] = None) -> Dataset:
    """drop_missing -> scale -> window -> split.

    ``fit_scope="full"`` fits the scaler on every retained row before
    splitting; ``"train"`` fits it only on rows touched by training windows.
    A ready ``scaler`` (e.g. one stored with a model) overrides both.
    """
    clean = drop_missing(series)
    raw = clean.to_matrix()
    stamps = clean.timestamps if strict_gaps else None
    interval = clean.sample_interval
    starts = make_windows(raw, lookback, horizon, TARGET_COLUMN, stamps, interval).starts
    train_idx, test_idx = split_indices(len(starts), train_fraction, split_mode, seed)
    if scaler is not None:
        pass
    elif fit_scope == "full":
        scaler = fit_scaler(raw)
    elif fit_scope == "train":
        span = lookback + horizon
        rows = np.unique((starts[train_idx][:, None] + np.arange(span)[None, :]).ravel())
        scaler = fit_scaler(raw[rows])
    else:
        raise ValueError(f"fit_scope must be 'full' or 'train', got {fit_scope!r}")
    windows = make_windows(transform(raw, scaler), lookback, horizon, TARGET_COLUMN, stamps, interval)
    return Dataset(windows.subset(train_idx), windows.subset(test_idx), scaler, clean)


# --------------------------------------------------------------------------
# synthetic data

# ws10 dynamics: ws_t = a*ws_{t-1} + b*sin(2*pi*t/288) + c*ws_{t-1}*(1 - ws_{t-1}/s) + eps
# a + c = 3.3 puts the map in its period-doubling regime: strongly nonlinear,
# yet predictable from the previous value up to the noise.
SYNTH_A = 1.0
SYNTH_B = 0.1
SYNTH_C = 2.3
SYNTH_S = 10.0
SYNTH_WS_NOISE = 0.3
SYNTH_WS2_RATIO = 0.6
SYNTH_WS2_NOISE = 0.3
SYNTH_SRAD_PEAK = 800.0
SYNTH_SRAD_NOISE = 15.0
STEPS_PER_DAY = 288
SYNTH_START = datetime(2016, 2, 1)


def synth_generate(n_steps: int, seed: int = 0, start: datetime = SYNTH_START) -> RecordSeries:
    """Seed-deterministic synthetic station series on a 5-minute grid."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    t = np.arange(n_steps)
    day_phase = 2.0 * np.pi * t / STEPS_PER_DAY

    ws = np.empty(n_steps)
    eps = rng.normal(0.0, SYNTH_WS_NOISE, n_steps)
    x = SYNTH_S * (SYNTH_A + SYNTH_C - 1.0) / SYNTH_C
    for k in range(n_steps):
        x = (SYNTH_A * x + SYNTH_B * math.sin(day_phase[k])
             + SYNTH_C * x * (1.0 - x / SYNTH_S) + eps[k])
        x = max(x, 0.0)
        ws[k] = x

    ws2 = np.maximum(SYNTH_WS2_RATIO * ws + rng.normal(0.0, SYNTH_WS2_NOISE, n_steps), 0.0)

    # sunlight between 06:00 and 18:00
    sun = np.maximum(np.sin(day_phase - np.pi / 2.0), 0.0)
    srad = np.maximum(SYNTH_SRAD_PEAK * sun + rng.normal(0.0, SYNTH_SRAD_NOISE, n_steps) * (sun > 0),
                      0.0)

    # temperature relaxes toward a radiation-driven level, so it trails srad
    temp = np.empty(n_steps)
    tc = 2.0
    temp_noise = rng.normal(0.0, 0.1, n_steps)
    for k in range(n_steps):
        tc = 0.98 * tc + 0.02 * (-2.0 + 0.02 * srad[k]) + temp_noise[k]
        temp[k] = tc

    rh = np.clip(70.0 - 2.5 * temp + rng.normal(0.0, 2.0, n_steps), 0.0, 100.0)
    press = np.empty(n_steps)
    p = 900.0
    press_steps = rng.normal(0.0, 0.03, n_steps)
    for k in range(n_steps):
        p = p + 0.001 * (900.0 - p) + press_steps[k]
        press[k] = p
    dewpt = temp - 1.0 - np.abs(rng.normal(0.0, 3.0, n_steps))
    wdir = np.mod(180.0 + np.cumsum(rng.normal(0.0, 5.0, n_steps)), 360.0)

    records = [
        MeteoRecord(start + k * SAMPLE_INTERVAL, float(ws[k]), float(wdir[k]), float(temp[k]),
                    float(rh[k]), float(press[k]), float(dewpt[k]), float(ws2[k]), float(srad[k]))
        for k in range(n_steps)
    ]
    return RecordSeries(records)

