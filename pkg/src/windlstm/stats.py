"""Correlation with significance testing, and forecast error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import TARGET_COLUMN, VARIABLES, RecordSeries
from .errors import DomainError, ShapeError, UndefinedCorrelationError, UndefinedR2Error

VARIABLE_LABELS = {
    "ws10": "Wind speed",
    "wdir": "Wind Direction",
    "temp": "Temperature",
    "rh": "Humidity",
    "press": "Pressure",
    "dewpt": "Dewpoint",
    "ws2": "Wind speed at 2 meters",
    "srad": "Solar Radiation",
}


def pearson_r(x, y) -> float:
    """Product-moment correlation coefficient, clamped to [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"pearson_r needs two equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 3:
        raise ShapeError("pearson_r needs at least 3 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _beta_cf(a: float, b: float, x: float, max_iter: int = 10000, eps: float = 1e-16) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise DomainError(f"reg_inc_beta requires a > 0 and b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"reg_inc_beta requires x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only below the mean; reflect otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def p_value_two_sided(r: float, n: int) -> float:
    """Two-sided p-value of the t test for zero correlation, df = n - 2."""
    if n < 3:
        raise DomainError(f"need n >= 3 for a correlation test, got {n}")
    if abs(r) > 1.0:
        raise DomainError(f"|r| must not exceed 1, got {r}")
    if abs(r) == 1.0:
        return 0.0
    df = n - 2
    t2 = r * r * df / (1.0 - r * r)
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t2))


@dataclass(frozen=True)
class CorrelationRow:
    variable_name: str
    r: float
    p_value: float
    significant: bool


def correlation_report(series, threshold: float = 0.02, target: str = "ws10") -> list:
    """Correlate every variable except ``target`` against ``target``.

    ``series`` is a cleaned :class:`RecordSeries` or an (n, 8) matrix in
    ``VARIABLES`` column order.
    """
    matrix = series.to_matrix() if isinstance(series, RecordSeries) else np.asarray(series, float)
    if np.isnan(matrix).any():
        raise ValueError("correlation_report needs a series without missing values")
    n = matrix.shape[0]
    y = matrix[:, VARIABLES.index(target)]
    rows = []
    for j, name in enumerate(VARIABLES):
        if name == target:
            continue
        r = pearson_r(matrix[:, j], y)
        p = p_value_two_sided(r, n)
        rows.append(CorrelationRow(name, r, p, p < threshold))
    return rows


def correlation_csv(rows) -> str:
    lines = ["variable,r,p_value,significant"]
    for row in rows:
        lines.append(f"{row.variable_name},{row.r!r},{row.p_value!r},{str(row.significant).lower()}")
    return "\n".join(lines) + "\n"


def render_correlation_table(rows, threshold: float = 0.02) -> str:
    """Plain-text table; significant coefficients carry a ``*``."""
    labels = [VARIABLE_LABELS.get(r.variable_name, r.variable_name) for r in rows]
    cells = [f"{r.r:.4f}" + ("*" if r.significant else "") for r in rows]
    pvals = [f"{r.p_value:.4g}" for r in rows]
    w0 = max(len(s) for s in labels + ["Variable"])
    w1 = max(len(s) for s in cells + ["Correlation"])
    w2 = max(len(s) for s in pvals + ["p-value"])
    out = [f"{'Variable':<{w0}} | {'Correlation':>{w1}} | {'p-value':>{w2}}",
           f"{'-' * w0}-+-{'-' * w1}-+-{'-' * w2}"]
    for lab, c, p in zip(labels, cells, pvals):
        out.append(f"{lab:<{w0}} | {c:>{w1}} | {p:>{w2}}")
    out.append(f"(* significant at p < {threshold:g})")
    return "\n".join(out)


# --------------------------------------------------------------------------
# error metrics

@dataclass(frozen=True)
class MetricsReport:
    mse: float
    rmse: float
    mae: float
    r2: float
    n: int

    def csv_row(self, model: str, units: str | None = None) -> str:
        fields = [model, repr(self.mse), repr(self.rmse), repr(self.mae), repr(self.r2)]
        if units is not None:
            fields.append(units)
        return ",".join(fields)


def metrics(y_true, y_pred) -> MetricsReport:
    """MSE, RMSE, MAE and the coefficient of determination.

    Raises :class:`UndefinedR2Error` for a constant ``y_true``; the other
    metrics are attached to the exception as ``partial`` (with ``r2=nan``).
    """
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    n = len(y_true)
    if n == 0:
        raise ShapeError("metrics need at least one sample")
    err = y_true - y_pred
    sse = float(err @ err)
    mse = sse / n
    rmse = math.sqrt(mse)
    mae = float(np.abs(err).sum()) / n
    dev = y_true - y_true.mean()
    sst = float(dev @ dev)
    if sst == 0.0:
        raise UndefinedR2Error("R² is undefined for a constant target",
                               partial=MetricsReport(mse, rmse, mae, float("nan"), n))
    return MetricsReport(mse, rmse, mae, 1.0 - sse / sst, n)
