"""Stacked LSTM regressor with hand-written backpropagation through time.

Gate parameters of a layer are stored stacked along the first axis in the
order (forget, input, candidate, output), so ``W[:H]`` is the forget-gate
input matrix, ``W[H:2H]`` the input gate, ``W[2H:3H]`` the candidate and
``W[3H:]`` the output gate.  All forward/backward routines work on a batch
of windows at once; a single (w, d) window is treated as a batch of one.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Scaler
from .errors import (
    ModelFormatError,
    ModelShapeError,
    ModelTruncatedError,
    ModelVersionError,
    NumericError,
    ShapeError,
    StateError,
)

GATES = ("f", "i", "c", "o")
GATE_NAMES = {"f": "forget", "i": "input", "c": "candidate", "o": "output"}
ACTIVATIONS = ("sigmoid", "relu")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_sizes: tuple = (32, 32)
    dropout_rate: float = 0.05
    gate_activation: str = "sigmoid"
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("need at least one layer, every hidden size >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.gate_activation not in ACTIVATIONS:
            raise ValueError(f"gate_activation must be one of {ACTIVATIONS}")
        if self.output_dim != 1:
            raise ValueError("only a scalar output head is supported")


@dataclass(frozen=True)
class LstmLayerParams:
    W: np.ndarray   # (4H, D)
    U: np.ndarray   # (4H, H)
    b: np.ndarray   # (4H,)

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str):
        """``(W_g, U_g, b_g)`` views for gate ``name`` in ``GATES``."""
        H = self.hidden_size
        k = GATES.index(name)
        sl = slice(k * H, (k + 1) * H)
        return self.W[sl], self.U[sl], self.b[sl]


@dataclass(frozen=True)
class Framing:
    """How the model's inputs were built; stored alongside the weights."""

    lookback: int
    horizon: int
    target_column: int
    scaler: Scaler


@dataclass(frozen=True)
class StackedLstmModel:
    config: NetworkConfig
    layers: tuple
    dense_w: np.ndarray
    dense_b: float
    framing: Optional[Framing] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) != len(self.config.hidden_sizes):
            raise ShapeError("layer count does not match config")
        d = self.config.input_dim
        for layer, H in zip(self.layers, self.config.hidden_sizes):
            if layer.W.shape != (4 * H, d) or layer.U.shape != (4 * H, H) or layer.b.shape != (4 * H,):
                raise ShapeError(f"layer parameters do not match hidden={H}, input={d}")
            d = H
        if self.dense_w.shape != (d,):
            raise ShapeError(f"dense weights must have shape ({d},)")

    def parameters(self) -> dict:
        """Flat name -> array mapping (shared, not copied)."""
        out = {}
        for l, layer in enumerate(self.layers):
            out[f"layers.{l}.W"] = layer.W
            out[f"layers.{l}.U"] = layer.U
            out[f"layers.{l}.b"] = layer.b
        out["dense.w"] = self.dense_w
        out["dense.b"] = np.asarray(self.dense_b, dtype=float)
        return out

    def with_parameters(self, params: dict) -> "StackedLstmModel":
        layers = [LstmLayerParams(params[f"layers.{l}.W"], params[f"layers.{l}.U"],
                                  params[f"layers.{l}.b"])
                  for l in range(len(self.layers))]
        return StackedLstmModel(self.config, layers, params["dense.w"],
                                float(params["dense.b"]), self.framing)

    def with_framing(self, framing: Optional[Framing]) -> "StackedLstmModel":
        return StackedLstmModel(self.config, self.layers, self.dense_w, self.dense_b, framing)

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_model(config: NetworkConfig, seed: int = 0) -> StackedLstmModel:
    """Glorot-uniform weights, zero biases except a forget bias of one."""
    rng = np.random.default_rng(seed)
    layers = []
    d = config.input_dim
    for H in config.hidden_sizes:
        W = np.concatenate([_glorot(rng, d, H, (H, d)) for _ in GATES])
        U = np.concatenate([_glorot(rng, H, H, (H, H)) for _ in GATES])
        b = np.zeros(4 * H)
        b[:H] = 1.0
        layers.append(LstmLayerParams(W, U, b))
        d = H
    dense_w = _glorot(rng, d, 1, (d,))
    return StackedLstmModel(config, layers, dense_w, 0.0)


# --------------------------------------------------------------------------
# forward

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _gate(z, activation):
    if activation == "sigmoid":
        return _sigmoid(z)
    return np.maximum(z, 0.0)


def _gate_grad(z, a, activation):
    if activation == "sigmoid":
        return a * (1.0 - a)
    return (z > 0.0).astype(z.dtype)


@dataclass(frozen=True)
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: Optional[int] = None) -> "CellState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class CellCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    z: np.ndarray          # gate pre-activations, (B, 4H)
    f: np.ndarray
    i: np.ndarray
    k: np.ndarray          # candidate
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


def cell_forward(x_t, prev: CellState, params: LstmLayerParams,
                 gate_activation: str = "sigmoid"):
    """One LSTM step.

    f = g(W_f x + U_f h + b_f), i and o likewise, k = tanh(W_c x + U_c h + b_c),
    c' = f*c + i*k, h' = o*tanh(c').  Accepts a single vector or a batch
    (rows are samples).  Returns ``(CellState, CellCache)``.
    """
    x_t = np.asarray(x_t, dtype=float)
    single = x_t.ndim == 1
    x = x_t[None, :] if single else x_t
    h_prev = prev.h[None, :] if prev.h.ndim == 1 else prev.h
    c_prev = prev.c[None, :] if prev.c.ndim == 1 else prev.c
    H = params.hidden_size
    if x.shape[1] != params.input_size:
        raise ShapeError(f"input has {x.shape[1]} features, layer expects {params.input_size}")
    if h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ShapeError(f"previous state must have {H} units")
    if h_prev.shape[0] != x.shape[0]:
        h_prev = np.broadcast_to(h_prev, (x.shape[0], H))
        c_prev = np.broadcast_to(c_prev, (x.shape[0], H))

    z = x @ params.W.T + h_prev @ params.U.T + params.b
    f = _gate(z[:, :H], gate_activation)
    i = _gate(z[:, H:2 * H], gate_activation)
    k = np.tanh(z[:, 2 * H:3 * H])
    o = _gate(z[:, 3 * H:], gate_activation)
    c = f * c_prev + i * k
    tanh_c = np.tanh(c)
    h = o * tanh_c
    if not (np.isfinite(h).all() and np.isfinite(c).all()):
        for name, v in (("forget", f), ("input", i), ("candidate", k), ("output", o),
                        ("cell", c), ("hidden", h)):
            if not np.isfinite(v).all():
                raise NumericError(f"non-finite values in {name} gate")
    cache = CellCache(x, h_prev, c_prev, z, f, i, k, o, c, tanh_c, h)
    if single:
        return CellState(h[0], c[0]), cache
    return CellState(h, c), cache


@dataclass
class ForwardCache:
    model: StackedLstmModel
    steps: list              # steps[layer][t] -> CellCache
    h_last: np.ndarray       # (B, H) before dropout
    mask: np.ndarray         # (B, H); ones in eval mode
    h_drop: np.ndarray
    single: bool
    mode: str = "eval"

    @property
    def lookback(self) -> int:
        return len(self.steps[0])


def _dropout_mask(shape, rate, seed):
    if rate == 0.0:
        return np.ones(shape)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = rng.random(shape) < 1.0 - rate
    return keep / (1.0 - rate)


def network_forward(window, model: StackedLstmModel, mode: str = "eval",
                    dropout_seed=None, dropout_mask: Optional[np.ndarray] = None):
    """Run the stack over one window (w, d) or a batch (B, w, d).

    In ``train`` mode the final hidden vector goes through inverted dropout;
    masks come from ``dropout_mask`` if given, else from a generator built
    from ``dropout_seed`` (an int, SeedSequence or Generator). Returns the
    prediction (scalar for one window, (B,) for a batch) and the cache.
    """
    window = np.asarray(window, dtype=float)
    single = window.ndim == 2
    X = window[None] if single else window
    if X.ndim != 3 or X.shape[2] != model.config.input_dim:
        raise ShapeError(f"expected windows with {model.config.input_dim} columns, got shape {window.shape}")
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    B, w, _ = X.shape
    act = model.config.gate_activation
    seq = [X[:, t, :] for t in range(w)]
    steps = []
    for layer in model.layers:
        state = CellState.zeros(layer.hidden_size, B)
        layer_cache = []
        out = []
        for t in range(w):
            state, cc = cell_forward(seq[t], state, layer, act)
            layer_cache.append(cc)
            out.append(state.h)
        steps.append(layer_cache)
        seq = out
    h_last = seq[-1]
    rate = model.config.dropout_rate
    if mode == "train":
        if dropout_mask is not None:
            mask = np.asarray(dropout_mask, dtype=float).reshape(h_last.shape)
        else:
            mask = _dropout_mask(h_last.shape, rate, dropout_seed)
    else:
        mask = np.ones_like(h_last)
    h_drop = h_last * mask
    pred = h_drop @ model.dense_w + model.dense_b
    cache = ForwardCache(model, steps, h_last, mask, h_drop, single, mode)
    return (float(pred[0]) if single else pred), cache


def predict(model: StackedLstmModel, windows, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode predictions for a (n, w, d) array of windows."""
    windows = np.asarray(windows, dtype=float)
    out = [network_forward(windows[s:s + batch_size], model)[0]
           for s in range(0, len(windows), batch_size)]
    return np.concatenate(out) if out else np.empty(0)


# --------------------------------------------------------------------------
# backward

def network_backward(cache: ForwardCache, model: StackedLstmModel, d_prediction) -> dict:
    """Gradients of ``sum(d_prediction * prediction)`` w.r.t. every parameter.

    Returns a dict keyed like :meth:`StackedLstmModel.parameters`. Batch
    contributions are summed, not averaged.
    """
    if cache.model is not model:
        raise StateError("forward cache was produced by a different model")
    B = cache.h_last.shape[0]
    dpred = np.asarray(d_prediction, dtype=float)
    dpred = np.full(B, float(dpred)) if dpred.ndim == 0 else dpred.ravel()
    if dpred.shape != (B,):
        raise ShapeError(f"d_prediction must have {B} entries")
    act = model.config.gate_activation
    w = cache.lookback
    grads = {"dense.w": cache.h_drop.T @ dpred, "dense.b": np.asarray(dpred.sum())}
    dh_top = np.outer(dpred, model.dense_w) * cache.mask

    dh_in = [None] * w
    dh_in[-1] = dh_top
    for l in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[l]
        H = layer.hidden_size
        dW = np.zeros_like(layer.W)
        dU = np.zeros_like(layer.U)
        db = np.zeros_like(layer.b)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dx = [None] * w
        for t in range(w - 1, -1, -1):
            cc = cache.steps[l][t]
            dh = dh_next if dh_in[t] is None else dh_in[t] + dh_next
            do = dh * cc.tanh_c
            dc = dh * cc.o * (1.0 - cc.tanh_c ** 2) + dc_next
            dz = np.empty((B, 4 * H))
            dz[:, :H] = dc * cc.c_prev * _gate_grad(cc.z[:, :H], cc.f, act)
            dz[:, H:2 * H] = dc * cc.k * _gate_grad(cc.z[:, H:2 * H], cc.i, act)
            dz[:, 2 * H:3 * H] = dc * cc.i * (1.0 - cc.k ** 2)
            dz[:, 3 * H:] = do * _gate_grad(cc.z[:, 3 * H:], cc.o, act)
            dc_next = dc * cc.f
            dW += dz.T @ cc.x
            dU += dz.T @ cc.h_prev
            db += dz.sum(axis=0)
            dh_next = dz @ layer.U
            if l > 0:
                dx[t] = dz @ layer.W
        grads[f"layers.{l}.W"] = dW
        grads[f"layers.{l}.U"] = dU
        grads[f"layers.{l}.b"] = db
        dh_in = dx
    return {k: grads[k] for k in model.parameters()}


# --------------------------------------------------------------------------
# serialization

MAGIC = b"MSLSTM"
FORMAT_VERSION = 1
_ACT_CODES = {"sigmoid": 0, "relu": 1}


def serialize(model: StackedLstmModel) -> bytes:
    """Encode ``model`` as a little-endian binary document.

    Layout: magic ``MSLSTM``, u32 version, u32 config-block length, the config
    block, u64 count of float64 values, then the values: per layer W, U, b
    (gate order f, i, c, o; row-major), then dense weights and dense bias.
    """
    cfg = model.config
    block = io.BytesIO()
    block.write(struct.pack("<II", cfg.input_dim, len(cfg.hidden_sizes)))
    block.write(struct.pack(f"<{len(cfg.hidden_sizes)}I", *cfg.hidden_sizes))
    block.write(struct.pack("<dB", cfg.dropout_rate, _ACT_CODES[cfg.gate_activation]))
    fr = model.framing
    if fr is None:
        block.write(struct.pack("<B", 0))
    else:
        ncol = fr.scaler.n_columns
        block.write(struct.pack("<BIIII", 1, fr.lookback, fr.horizon, fr.target_column, ncol))
        block.write(np.asarray(fr.scaler.v_min, dtype="<f8").tobytes())
        block.write(np.asarray(fr.scaler.v_max, dtype="<f8").tobytes())
    block = block.getvalue()
    values = np.concatenate([np.asarray(p, dtype=float).ravel()
                             for p in model.parameters().values()]).astype("<f8")
    return b"".join([MAGIC, struct.pack("<II", FORMAT_VERSION, len(block)), block,
                     struct.pack("<Q", values.size), values.tobytes()])


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise ModelTruncatedError(f"model document truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def deserialize(doc: bytes) -> StackedLstmModel:
    doc = bytes(doc)
    rd = _Reader(doc)
    if rd.take(len(MAGIC), "magic") != MAGIC:
        raise ModelFormatError("not a model document (bad magic)")
    version, block_len = rd.unpack("<II", "header")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    block = _Reader(rd.take(block_len, "config block"))
    input_dim, n_layers = block.unpack("<II", "config")
    hidden = block.unpack(f"<{n_layers}I", "hidden sizes")
    dropout, act_code = block.unpack("<dB", "config")
    acts = {v: k for k, v in _ACT_CODES.items()}
    if act_code not in acts:
        raise ModelFormatError(f"unknown gate activation code {act_code}")
    (has_framing,) = block.unpack("<B", "framing flag")
    framing = None
    if has_framing:
        lookback, horizon, target_column, ncol = block.unpack("<IIII", "framing")
        v_min = np.frombuffer(block.take(8 * ncol, "scaler"), dtype="<f8").astype(float)
        v_max = np.frombuffer(block.take(8 * ncol, "scaler"), dtype="<f8").astype(float)
        framing = Framing(lookback, horizon, target_column, Scaler(v_min, v_max))
    try:
        config = NetworkConfig(input_dim, hidden, dropout, acts[act_code])
    except ValueError as exc:
        raise ModelShapeError(f"invalid network config in model document: {exc}") from None

    (count,) = rd.unpack("<Q", "value count")
    expected = 0
    shapes = []
    d = input_dim
    for H in hidden:
        shapes += [(4 * H, d), (4 * H, H), (4 * H,)]
        d = H
    shapes += [(d,), ()]
    expected = sum(int(np.prod(s)) for s in shapes)
    if count > (len(doc) - rd.pos) // 8:
        raise ModelTruncatedError(f"model document declares {count} values but holds fewer")
    if count != expected:
        raise ModelShapeError(f"config implies {expected} parameters, document has {count}")
    flat = np.frombuffer(rd.take(8 * count, "parameters"), dtype="<f8").astype(float)
    if rd.pos != len(doc):
        raise ModelFormatError("trailing bytes after model parameters")
    arrays = []
    off = 0
    for s in shapes:
        size = int(np.prod(s))
        arrays.append(flat[off:off + size].reshape(s).copy())
        off += size
    layers = [LstmLayerParams(*arrays[3 * l:3 * l + 3]) for l in range(n_layers)]
    return StackedLstmModel(config, layers, arrays[-2], float(arrays[-1]), framing)


def save_model(model: StackedLstmModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path) -> StackedLstmModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
