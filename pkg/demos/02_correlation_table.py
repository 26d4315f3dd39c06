# %% [markdown]
# # Which variables move with wind speed?
#
# Pearson correlation of every variable against 10 m wind speed, with a
# two-sided t-test p-value. Stars mark p < 0.02.

# %%
from windlstm import data as D
from windlstm.stats import correlation_report, p_value_two_sided, render_correlation_table

series = D.synth_generate(8353, seed=1)
rows = correlation_report(series, threshold=0.02)
print(render_correlation_table(rows))

# %% The p-value depends strongly on sample size: the same r at different n.
for n in (50, 500, 8353):
    print(f"r = 0.1, n = {n:5d}: p = {p_value_two_sided(0.1, n):.3g}")
