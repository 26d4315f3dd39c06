import numpy as np
import pytest

from windlstm import data as D
from windlstm.errors import (
    ModelFormatError,
    ModelShapeError,
    ModelTruncatedError,
    ModelVersionError,
    NumericError,
    ShapeError,
    StateError,
)
from windlstm.lstm import (
    CellState,
    Framing,
    LstmLayerParams,
    NetworkConfig,
    StackedLstmModel,
    cell_forward,
    deserialize,
    init_model,
    load_model,
    network_backward,
    network_forward,
    predict,
    save_model,
    serialize,
)

from .lstm_oracles import finite_difference_grads, max_relative_error, scalar_cell


def random_layer(rng, H, D_in, scale=0.5):
    return LstmLayerParams(rng.normal(0, scale, (4 * H, D_in)), rng.normal(0, scale, (4 * H, H)),
                           rng.normal(0, scale, 4 * H))


class TestInit:
    def test_deterministic(self):
        cfg = NetworkConfig(8)
        a, b = init_model(cfg, 3), init_model(cfg, 3)
        assert serialize(a) == serialize(b)
        assert serialize(a) != serialize(init_model(cfg, 4))

    def test_forget_bias_and_shapes(self):
        m = init_model(NetworkConfig(8, (32, 32)), 0)
        Wf0, _, bf0 = m.layers[0].gate("f")
        Wf1, Uf1, bf1 = m.layers[1].gate("f")
        assert Wf0.shape == (32, 8) and Wf1.shape == (32, 32) and Uf1.shape == (32, 32)
        assert np.all(bf0 == 1.0) and np.all(bf1 == 1.0)
        for g in "ico":
            assert np.all(m.layers[0].gate(g)[2] == 0.0)

    def test_glorot_range(self):
        m = init_model(NetworkConfig(8, (16,)), 0)
        assert np.abs(m.layers[0].W).max() <= np.sqrt(6 / (8 + 16))
        assert np.abs(m.layers[0].U).max() <= np.sqrt(6 / 32)

    def test_stacking_shapes(self):
        for hidden in [(1,), (3, 5), (4, 2, 7)]:
            m = init_model(NetworkConfig(3, hidden), 0)
            dims = [3] + list(hidden)
            for l, layer in enumerate(m.layers):
                assert layer.input_size == dims[l] and layer.hidden_size == dims[l + 1]

    def test_bad_config(self):
        with pytest.raises(ValueError):
            NetworkConfig(3, (4,), dropout_rate=1.0)
        with pytest.raises(ValueError):
            NetworkConfig(3, (), dropout_rate=0.0)
        with pytest.raises(ValueError):
            NetworkConfig(3, gate_activation="tanh")


class TestCell:
    def test_all_zero(self):
        p = LstmLayerParams(np.zeros((12, 2)), np.zeros((12, 3)), np.zeros(12))
        st, cache = cell_forward(np.array([0.3, -7.0]), CellState.zeros(3), p)
        for gate in (cache.f, cache.i, cache.o):
            assert np.all(gate == 0.5)
        assert np.all(cache.k == 0) and np.all(st.c == 0) and np.all(st.h == 0)

    def test_memory_carry(self):
        H = 3
        b = np.zeros(4 * H)
        b[:H] = 50.0
        b[H:2 * H] = -50.0
        p = LstmLayerParams(np.zeros((4 * H, 2)), np.zeros((4 * H, H)), b)
        c0 = np.array([0.7, -1.2, 2.0])
        st, cache = cell_forward(np.ones(2), CellState(np.zeros(H), c0), p)
        assert np.allclose(st.c, c0, atol=1e-12)
        assert np.allclose(st.h, cache.o * np.tanh(c0), atol=1e-15)

    @pytest.mark.parametrize("activation", ["sigmoid", "relu"])
    def test_scalar_oracle(self, activation):
        rng = np.random.default_rng(0)
        p = random_layer(rng, 3, 2)
        x, h0, c0 = rng.normal(size=2), rng.normal(size=3), rng.normal(size=3)
        st, cache = cell_forward(x, CellState(h0, c0), p, activation)
        ref = scalar_cell(x.tolist(), h0.tolist(), c0.tolist(), p.W.tolist(), p.U.tolist(),
                          p.b.tolist(), activation)
        for name, got in (("f", cache.f[0]), ("i", cache.i[0]), ("k", cache.k[0]), ("o", cache.o[0]),
                          ("c", st.c), ("h", st.h)):
            assert np.max(np.abs(got - ref[name])) < 1e-12, name

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(1)
        p = random_layer(rng, 4, 3)
        X, H0, C0 = rng.normal(size=(5, 3)), rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        st, _ = cell_forward(X, CellState(H0, C0), p)
        for r in range(5):
            one, _ = cell_forward(X[r], CellState(H0[r], C0[r]), p)
            assert np.allclose(one.h, st.h[r], atol=1e-15, rtol=0)

    def test_bounds(self):
        rng = np.random.default_rng(2)
        # moderate weights keep sigmoid(z) away from rounding to exactly 0 or 1
        p = random_layer(rng, 6, 4, scale=1.0)
        state = CellState.zeros(6)
        for _ in range(50):
            new, cache = cell_forward(rng.normal(size=4), state, p)
            for g in (cache.f, cache.i, cache.o):
                assert np.all((g > 0) & (g < 1))
            assert np.all(np.abs(cache.k) < 1) and np.all(np.abs(cache.tanh_c) < 1)
            assert np.all(np.abs(new.c) <= np.abs(state.c) + 1)
            state = new

    def test_shape_error(self):
        p = random_layer(np.random.default_rng(0), 3, 2)
        with pytest.raises(ShapeError):
            cell_forward(np.ones(5), CellState.zeros(3), p)

    def test_numeric_error_names_gate(self):
        p = random_layer(np.random.default_rng(0), 3, 2)
        with pytest.raises(NumericError, match="forget"):
            cell_forward(np.array([np.nan, 0.0]), CellState.zeros(3), p)


def small_net(activation="sigmoid", hidden=(4, 4), d=3, dropout=0.0, seed=0):
    rng = np.random.default_rng(seed)
    cfg = NetworkConfig(d, hidden, dropout, activation)
    layers, prev = [], d
    for H in hidden:
        layers.append(random_layer(rng, H, prev))
        prev = H
    return StackedLstmModel(cfg, layers, rng.normal(size=prev), 0.3)


class TestForward:
    def test_eval_deterministic(self):
        m = init_model(NetworkConfig(3, (5, 5), 0.5), 0)
        x = np.random.default_rng(0).normal(size=(7, 3))
        assert network_forward(x, m)[0] == network_forward(x, m)[0]

    def test_zero_dropout_train_equals_eval(self):
        m = init_model(NetworkConfig(3, (5, 5), 0.0), 0)
        x = np.random.default_rng(0).normal(size=(7, 3))
        assert network_forward(x, m, "train", dropout_seed=1)[0] == network_forward(x, m)[0]

    def test_eval_dropout_identity(self):
        m = init_model(NetworkConfig(3, (5,), 0.3), 0)
        _, cache = network_forward(np.ones((4, 3)), m)
        assert np.all(cache.mask == 1.0) and np.array_equal(cache.h_drop, cache.h_last)

    def test_dropout_monte_carlo(self):
        m = small_net(dropout=0.05)
        x = np.random.default_rng(3).normal(size=(5, 3))
        ev = network_forward(x, m)[0]
        batch = np.broadcast_to(x, (10000, 5, 3))
        preds, cache = network_forward(batch, m, "train", dropout_seed=11)
        assert abs(preds.mean() - ev) < 0.02 * abs(ev)
        kept = cache.mask > 0
        assert np.allclose(cache.mask[kept], 1 / 0.95)
        assert abs(kept.mean() - 0.95) < 0.01

    def test_batch_equals_single(self):
        m = small_net()
        X = np.random.default_rng(4).normal(size=(6, 5, 3))
        batch = network_forward(X, m)[0]
        singles = [network_forward(X[i], m)[0] for i in range(6)]
        assert np.allclose(batch, singles, atol=1e-14, rtol=0)
        assert np.allclose(predict(m, X, batch_size=4), batch, atol=1e-14, rtol=0)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            network_forward(np.ones((5, 4)), small_net())


class TestBackward:
    @pytest.mark.parametrize("activation", ["sigmoid", "relu"])
    def test_finite_differences(self, activation):
        m = small_net(activation, dropout=0.2, seed=1)
        rng = np.random.default_rng(2)
        X = rng.normal(size=(2, 5, 3))
        mask = (rng.random((2, 4)) < 0.8) / 0.8
        dp = np.array([0.7, -1.3])
        _, cache = network_forward(X, m, "train", dropout_mask=mask)
        grads = network_backward(cache, m, dp)

        def loss(params):
            pred, _ = network_forward(X, m.with_parameters(params), "train", dropout_mask=mask)
            return float(pred @ dp)

        fd = finite_difference_grads(loss, m.parameters())
        assert max_relative_error(grads, fd) < 1e-5

    def test_zero_upstream(self):
        m = small_net()
        _, cache = network_forward(np.ones((5, 3)), m)
        grads = network_backward(cache, m, 0.0)
        assert all(np.all(g == 0) for g in grads.values())

    def test_cache_mismatch(self):
        m = small_net()
        _, cache = network_forward(np.ones((5, 3)), m)
        with pytest.raises(StateError):
            network_backward(cache, small_net(seed=5), 1.0)

    def test_feedforward_composition(self):
        # one timestep and zero recurrent weights: each layer is h = o*tanh(i*k)
        rng = np.random.default_rng(7)
        H, d = 2, 2
        layers = [LstmLayerParams(rng.normal(size=(4 * H, d)), np.zeros((4 * H, H)), rng.normal(size=4 * H)),
                  LstmLayerParams(rng.normal(size=(4 * H, H)), np.zeros((4 * H, H)), rng.normal(size=4 * H))]
        m = StackedLstmModel(NetworkConfig(d, (H, H), 0.0), layers, rng.normal(size=H), 0.1)
        x = rng.normal(size=(1, d))

        sig = lambda z: 1 / (1 + np.exp(-z))

        def layer_jacobians(p, inp):
            z = p.W @ inp + p.b
            i, k, o = sig(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sig(z[3 * H:])
            c = i * k
            h = o * np.tanh(c)
            # dh/dz for the i, c, o blocks (forget gate has no effect when c_prev = 0)
            dh_dz = np.zeros((H, 4 * H))
            dh_dz[:, H:2 * H] = np.diag(o * (1 - np.tanh(c) ** 2) * k * i * (1 - i))
            dh_dz[:, 2 * H:3 * H] = np.diag(o * (1 - np.tanh(c) ** 2) * i * (1 - k ** 2))
            dh_dz[:, 3 * H:] = np.diag(np.tanh(c) * o * (1 - o))
            return h, dh_dz, dh_dz @ p.W

        h1, dh1_dz1, _ = layer_jacobians(layers[0], x[0])
        h2, dh2_dz2, dh2_dh1 = layer_jacobians(layers[1], h1)
        dpred_dh2 = m.dense_w
        expect_b2 = dpred_dh2 @ dh2_dz2
        expect_b1 = dpred_dh2 @ dh2_dh1 @ dh1_dz1
        expect_W1 = np.outer(expect_b1, x[0])

        pred, cache = network_forward(x, m)
        assert abs(pred - (m.dense_w @ h2 + 0.1)) < 1e-14
        grads = network_backward(cache, m, 1.0)
        assert np.allclose(grads["layers.1.b"], expect_b2, atol=1e-14)
        assert np.allclose(grads["layers.0.b"], expect_b1, atol=1e-14)
        assert np.allclose(grads["layers.0.W"], expect_W1, atol=1e-14)
        assert np.allclose(grads["dense.w"], h2, atol=1e-15)


class TestSerialization:
    def _model(self):
        m = init_model(NetworkConfig(8, (5, 3), 0.1, "relu"), 2)
        rng = np.random.default_rng(0)
        m = m.with_parameters({k: np.asarray(v) + rng.normal(size=np.shape(v)) for k, v in m.parameters().items()})
        sc = D.fit_scaler(rng.normal(size=(10, 8)))
        return m.with_framing(Framing(12, 1, 0, sc))

    def test_roundtrip_bit_exact(self, tmp_path):
        m = self._model()
        back = deserialize(serialize(m))
        assert back.config == m.config and back.framing == m.framing
        for k, v in m.parameters().items():
            assert np.array_equal(back.parameters()[k], v)
        save_model(m, tmp_path / "m.mslstm")
        assert serialize(load_model(tmp_path / "m.mslstm")) == serialize(m)

    def test_layout(self):
        m = init_model(NetworkConfig(2, (3,), 0.0), 0).with_framing(None)
        doc = serialize(m)
        assert doc[:6] == b"MSLSTM"
        assert int.from_bytes(doc[6:10], "little") == 1
        tail = np.frombuffer(doc[-8 * m.n_parameters:], dtype="<f8")
        # forget-gate input weights come first, row-major
        assert np.array_equal(tail[:6], m.layers[0].gate("f")[0].ravel())
        assert tail[-1] == m.dense_b

    def _count_offset(self, doc):
        block_len = int.from_bytes(doc[10:14], "little")
        return 14 + block_len

    def test_corrupt_length(self):
        doc = bytearray(serialize(self._model()))
        off = self._count_offset(doc)
        doc[off:off + 8] = (10 ** 9).to_bytes(8, "little")
        with pytest.raises(ModelTruncatedError):
            deserialize(bytes(doc))

    def test_truncated_file(self):
        doc = serialize(self._model())
        with pytest.raises(ModelTruncatedError):
            deserialize(doc[:-5])
        with pytest.raises(ModelTruncatedError):
            deserialize(doc[:12])

    def test_version(self):
        doc = bytearray(serialize(self._model()))
        doc[6:10] = (99).to_bytes(4, "little")
        with pytest.raises(ModelVersionError):
            deserialize(bytes(doc))

    def test_shape_inconsistency(self):
        doc = bytearray(serialize(self._model()))
        off = self._count_offset(doc)
        count = int.from_bytes(doc[off:off + 8], "little")
        doc[off:off + 8] = (count - 1).to_bytes(8, "little")
        with pytest.raises(ModelShapeError):
            deserialize(bytes(doc[:-8]))

    def test_bad_magic(self):
        with pytest.raises(ModelFormatError):
            deserialize(b"NOTMSL" + serialize(self._model())[6:])

    def test_errors_distinct(self):
        assert len({ModelTruncatedError, ModelVersionError, ModelShapeError}) == 3
        assert not issubclass(ModelTruncatedError, ModelVersionError)
        assert not issubclass(ModelShapeError, ModelTruncatedError)
