"""Multivariate stacked-LSTM wind speed forecasting, written from scratch in numpy."""

from .baselines import LinearModel, lasso_fit, linear_predict, ols_fit, persistence_predict, ridge_fit
from .data import (
    VARIABLES,
    MeteoRecord,
    RecordSeries,
    Scaler,
    ScaledMatrix,
    WindowSet,
    drop_missing,
    fit_scaler,
    inverse_transform,
    make_windows,
    parse_csv,
    prepare_dataset,
    split,
    synth_generate,
    transform,
    write_csv,
)
from .lstm import (
    CellState,
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
from .stats import MetricsReport, correlation_report, metrics, p_value_two_sided, pearson_r, reg_inc_beta
from .trainer import BenchmarkConfig, LossHistory, TrainConfig, adam_step, benchmark, evaluate, train

__version__ = "0.1.0"
