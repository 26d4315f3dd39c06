"""Reference computations kept apart from the vectorized implementation."""

import math

import numpy as np


def scalar_cell(x, h_prev, c_prev, W, U, b, activation="sigmoid"):
    """Plain-loop LSTM step; W, U, b in stacked (f, i, c, o) layout."""
    H = len(h_prev)
    g = (lambda v: 1.0 / (1.0 + math.exp(-v))) if activation == "sigmoid" else (lambda v: max(v, 0.0))
    pre = []
    for r in range(4 * H):
        s = b[r]
        for j in range(len(x)):
            s += W[r][j] * x[j]
        for j in range(H):
            s += U[r][j] * h_prev[j]
        pre.append(s)
    f = [g(pre[u]) for u in range(H)]
    i = [g(pre[H + u]) for u in range(H)]
    k = [math.tanh(pre[2 * H + u]) for u in range(H)]
    o = [g(pre[3 * H + u]) for u in range(H)]
    c = [f[u] * c_prev[u] + i[u] * k[u] for u in range(H)]
    h = [o[u] * math.tanh(c[u]) for u in range(H)]
    return {"f": f, "i": i, "k": k, "o": o, "c": c, "h": h}


def finite_difference_grads(loss, params, eps=1e-5):
    """Central differences of ``loss(params)`` for every entry of every array."""
    out = {}
    for name, value in params.items():
        base = np.array(value, dtype=float)
        grad = np.zeros_like(base)
        flat = grad.reshape(-1)
        for j in range(base.size):
            trial = {k: np.array(v, dtype=float) for k, v in params.items()}
            trial[name].reshape(-1)[j] += eps
            up = loss(trial)
            trial[name].reshape(-1)[j] -= 2 * eps
            down = loss(trial)
            flat[j] = (up - down) / (2 * eps)
        out[name] = grad
    return out


def max_relative_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        a = np.asarray(analytic[name]).ravel()
        n = np.asarray(numeric[name]).ravel()
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst
