# %% [markdown]
# # From station CSV to supervised windows
#
# Generate a synthetic month of 5-minute observations, write it in the station
# CSV schema, read it back, drop incomplete rows, min-max scale every column
# and cut one-hour lookback windows with a 5-minute-ahead target.

# %%
import io

import numpy as np

from windlstm import data as D

series = D.synth_generate(8353, seed=1)
buf = io.StringIO()
D.write_csv(series, buf)
print(buf.getvalue().splitlines()[:3])

# %% Knock out a few values, as real station feeds do, then delete those rows.
raw = D.parse_csv(buf.getvalue().encode())
records = list(raw.records)
for k in (10, 500, 501, 4000):
    r = records[k]
    records[k] = D.MeteoRecord(r.timestamp, r.ws10, r.wdir, None, r.rh, r.press, r.dewpt, r.ws2, r.srad)
clean = D.drop_missing(D.RecordSeries(records))
print(f"{len(raw)} rows read, {len(clean)} complete")

# %% Scale to [0, 1] per column.
matrix = clean.to_matrix()
scaler = D.fit_scaler(matrix)
scaled = D.transform(matrix, scaler)
for name, lo, hi in zip(D.VARIABLES, scaler.v_min, scaler.v_max):
    print(f"{name:>6}: {lo:9.2f} .. {hi:9.2f}")
assert np.allclose(D.inverse_transform(scaled, scaler), matrix)

# %% Windows of 12 steps (one hour), target = ws10 one step later.
windows = D.make_windows(scaled, lookback=12, horizon=1)
train, test = D.split(windows, 0.9, "random", seed=1)
print(f"{len(windows)} windows -> {len(train)} train / {len(test)} test, each {windows.inputs.shape[1:]}")

# Strict mode drops windows that straddle the deleted rows.
strict = D.make_windows(scaled, 12, 1, timestamps=clean.timestamps)
print(f"strict gap handling keeps {len(strict)} of {len(windows)} windows")
