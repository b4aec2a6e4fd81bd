//! Benchmark harness: reconstruction metrics, grid-search tuning, repeated
//! runs with nearest-rank percentiles, random-feature kernel bound checks and
//! table reproduction with CSV/JSON reports.
//!
//! Hyperparameter conventions follow the tables: the RFF value `σ_w` is the
//! Gaussian kernel bandwidth, so features are sampled with frequency scale
//! `1/σ_w` (see [`rff_frequency`]); MSRFF tunes the upper bound of the
//! sampled frequency scales and sigmoids the weight bound `c`.

mod kernel;
mod metrics;
mod pipeline;
mod table;

pub use kernel::{bernstein_rhs, kernel_bound_check, multiscale_rhs, BoundRow, BoundTable, DEFAULT_P_LADDER};
pub use metrics::{errors, percentile_nearest_rank, repeat_runs, EvalReport, Spread};
pub use pipeline::{
    effective_p, feature_map, fit, int_grid, linspace, rff_frequency, tune, tune_with, FitOptions, Fitted, Method,
    TrainSet, TuneResult,
};
pub use table::{
    evaluate_config, prepare, prepare_from, reproduce_table, run_table, BenchmarkConfig, BenchmarkId, ConfigResult,
    Prepared, Ranges, SplitStats, TableReport,
};
