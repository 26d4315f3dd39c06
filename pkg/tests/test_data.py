import io
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from windlstm import data as D
from windlstm.errors import (
    CsvParseError,
    EmptyDatasetError,
    InsufficientDataError,
    OrderingError,
    SchemaError,
    ShapeError,
    SplitError,
)
from windlstm.stats import pearson_r

from .conftest import HEADER, csv_bytes


class TestParseCsv:
    def test_three_rows(self, three_rows):
        series = D.parse_csv(io.BytesIO(three_rows))
        assert len(series) == 3
        assert series.records[0].ws10 == 5.1
        assert series.records[2].timestamp == datetime(2016, 2, 1, 0, 10)

    def test_empty_cell_is_missing(self, three_rows):
        series = D.parse_csv(three_rows)
        assert series.records[1].temp is None
        assert not series.records[1].complete
        assert np.isnan(series.to_matrix()[1, D.VARIABLES.index("temp")])

    def test_missing_column(self):
        bad = csv_bytes(["2016-02-01 00:00,1,2,3,4,5,6,7"], header=HEADER.replace(",srad", ""))
        with pytest.raises(SchemaError, match="srad"):
            D.parse_csv(bad)

    def test_non_numeric(self):
        bad = csv_bytes(["2016-02-01 00:00,1,2,3,4,5,6,7,8", "2016-02-01 00:05,1,2,abc,4,5,6,7,8"])
        with pytest.raises(CsvParseError) as info:
            D.parse_csv(bad)
        assert info.value.row == 3 and info.value.column == "temp"

    def test_non_increasing(self):
        bad = csv_bytes(["2016-02-01 00:05,1,2,3,4,5,6,7,8", "2016-02-01 00:05,1,2,3,4,5,6,7,8"])
        with pytest.raises(OrderingError):
            D.parse_csv(bad)

    def test_write_parse_roundtrip(self, synth_small, tmp_path):
        path = tmp_path / "s.csv"
        D.write_csv(synth_small, path)
        back = D.parse_csv(path)
        assert back.records == synth_small.records


class TestDropMissing:
    def _series(self, n, missing_rows):
        recs = []
        t0 = datetime(2016, 2, 1)
        for k in range(n):
            vals = dict(zip(D.VARIABLES, [float(k)] * 8))
            if k in missing_rows:
                vals["press"] = None
            recs.append(D.MeteoRecord(t0 + k * D.SAMPLE_INTERVAL, **vals))
        return D.RecordSeries(recs)

    def test_counts(self):
        out = D.drop_missing(self._series(10, {3, 7}))
        assert len(out) == 8
        assert [r.ws10 for r in out] == [0, 1, 2, 4, 5, 6, 8, 9]

    def test_identity(self):
        s = self._series(5, set())
        assert D.drop_missing(s).records == s.records

    def test_all_missing(self):
        with pytest.raises(EmptyDatasetError):
            D.drop_missing(self._series(4, {0, 1, 2, 3}))

    @given(st.sets(st.integers(0, 19), max_size=19))
    def test_length_accounting(self, missing):
        s = self._series(20, missing)
        assert len(D.drop_missing(s)) + len(missing) == 20


class TestScaler:
    def test_min_max(self):
        sc = D.fit_scaler([[0.0], [5.0], [10.0]])
        assert sc.v_min[0] == 0 and sc.v_max[0] == 10
        assert D.transform([[0.0], [5.0], [10.0]], sc).values.ravel().tolist() == [0.0, 0.5, 1.0]

    def test_degenerate(self):
        sc = D.fit_scaler([[3.0, 1.0], [3.0, 2.0]])
        assert sc.degenerate.tolist() == [True, False]
        assert D.transform([[3.0, 1.0], [3.0, 2.0]], sc).values[:, 0].tolist() == [0.0, 0.0]

    def test_columns_independent(self):
        sc = D.fit_scaler([[0.0, 100.0], [1.0, -100.0]])
        assert sc.v_min.tolist() == [0.0, -100.0] and sc.v_max.tolist() == [1.0, 100.0]

    def test_empty(self):
        with pytest.raises(EmptyDatasetError):
            D.fit_scaler(np.empty((0, 3)))

    def test_shape_mismatch(self):
        sc = D.fit_scaler(np.ones((2, 3)))
        with pytest.raises(ShapeError):
            D.transform(np.ones((2, 4)), sc)

    @given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)),
                  elements=st.floats(-1e6, 1e6)))
    def test_range_and_roundtrip(self, x):
        sc = D.fit_scaler(x)
        z = D.transform(x, sc).values
        ok = ~sc.degenerate
        assert np.all(z[:, ok] >= 0.0) and np.all(z[:, ok] <= 1.0)
        assert np.all(z[:, ~ok] == 0.0)
        back = D.inverse_transform(z, sc)
        scale = np.maximum(np.abs(x[:, ok]), np.abs(sc.v_max - sc.v_min)[ok])
        assert np.all(np.abs(back[:, ok] - x[:, ok]) <= 1e-12 * np.maximum(scale, 1e-300) + 1e-300)
        # degenerate columns come back as their constant
        assert np.array_equal(back[:, ~ok], x[:, ~ok])


class TestWindows:
    def test_count(self):
        w = D.make_windows(np.random.default_rng(0).random((100, 8)), 12, 1)
        assert len(w) == 88 and w.inputs.shape == (88, 12, 8)

    def test_boundary(self):
        m = np.arange(13 * 8, dtype=float).reshape(13, 8)
        w = D.make_windows(m, 12, 1, target_column=0)
        assert len(w) == 1
        assert w.targets[0] == m[12, 0]
        assert np.array_equal(w.inputs[0], m[:12])

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            D.make_windows(np.zeros((12, 8)), 12, 1)

    def test_exhaustive_count_and_content(self):
        for T in range(1, 31):
            m = np.arange(T * 2, dtype=float).reshape(T, 2)
            for w in range(1, 11):
                for h in range(1, 4):
                    if T < w + h:
                        with pytest.raises(InsufficientDataError):
                            D.make_windows(m, w, h)
                        continue
                    ws = D.make_windows(m, w, h, target_column=1)
                    assert len(ws) == T - w - h + 1
                    i = len(ws) - 1
                    assert np.array_equal(ws.inputs[i], m[i:i + w])
                    assert ws.targets[i] == m[i + w + h - 1, 1]

    def test_strict_gaps(self):
        t0 = datetime(2016, 2, 1)
        stamps = [t0 + k * D.SAMPLE_INTERVAL for k in range(10)]
        stamps = stamps[:5] + [s + timedelta(minutes=30) for s in stamps[5:]]
        m = np.arange(20, dtype=float).reshape(10, 2)
        loose = D.make_windows(m, 3, 1)
        strict = D.make_windows(m, 3, 1, timestamps=stamps)
        assert len(loose) == 7
        # two contiguous runs of 5 rows, each fits 2 windows of 3 + target
        assert strict.starts.tolist() == [0, 1, 5, 6]


class TestSplit:
    def _windows(self, n=100):
        return D.make_windows(np.random.default_rng(1).random((n + 12, 3)), 12, 1)

    def test_random_counts(self):
        tr, te = D.split(self._windows(), 0.9, "random", seed=7)
        assert len(tr) == 90 and len(te) == 10
        assert not set(tr.starts) & set(te.starts)
        assert set(tr.starts) | set(te.starts) == set(range(100))

    def test_deterministic(self):
        a = D.split(self._windows(), 0.9, "random", seed=7)
        b = D.split(self._windows(), 0.9, "random", seed=7)
        assert np.array_equal(a[1].starts, b[1].starts)
        c = D.split(self._windows(), 0.9, "random", seed=8)
        assert not np.array_equal(a[1].starts, c[1].starts)

    def test_chronological(self):
        tr, te = D.split(self._windows(), 0.9, "chrono")
        assert te.starts.tolist() == list(range(90, 100))

    def test_empty_partition(self):
        with pytest.raises(SplitError):
            D.split(self._windows(5), 0.1, "random")
        with pytest.raises(SplitError):
            D.split(self._windows(5), 1.0)

    @settings(max_examples=40)
    @given(st.integers(2, 300), st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
    def test_partition_property(self, n, frac, seed):
        import math
        k = math.floor(n * frac)
        if k in (0, n):
            with pytest.raises(SplitError):
                D.split_indices(n, frac, "random", seed)
            return
        tr, te = D.split_indices(n, frac, "random", seed)
        assert len(tr) == k
        assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n))


class TestSynth:
    def test_deterministic(self):
        a = D.synth_generate(2000, seed=1)
        b = D.synth_generate(2000, seed=1)
        assert a.records == b.records
        assert a.records != D.synth_generate(2000, seed=2).records

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariants(self, seed):
        m = D.synth_generate(400, seed).to_matrix()
        col = {name: m[:, j] for j, name in enumerate(D.VARIABLES)}
        assert np.all(col["ws10"] >= 0) and np.all(col["ws2"] >= 0) and np.all(col["srad"] >= 0)
        assert np.all((col["rh"] >= 0) & (col["rh"] <= 100))
        assert np.all((col["wdir"] >= 0) & (col["wdir"] < 360))
        assert np.all(col["dewpt"] < col["temp"])

    def test_five_minute_grid(self):
        s = D.synth_generate(50, 0)
        diffs = {b - a for a, b in zip(s.timestamps, s.timestamps[1:])}
        assert diffs == {D.SAMPLE_INTERVAL}

    def test_ws2_tracks_ws10(self):
        s = D.synth_generate(5000, seed=3)
        assert pearson_r(s.column("ws2"), s.column("ws10")) > 0.5


class TestPrepareDataset:
    def test_fit_scopes(self, synth_small):
        full = D.prepare_dataset(synth_small, seed=2)
        train_only = D.prepare_dataset(synth_small, seed=2, fit_scope="train")
        assert np.array_equal(full.test.starts, train_only.test.starts)
        assert np.all(full.train.inputs >= 0) and np.all(full.train.inputs <= 1)
        # training windows never leave [0, 1] when the scaler saw exactly their rows
        assert np.all(train_only.train.inputs >= 0) and np.all(train_only.train.inputs <= 1)
