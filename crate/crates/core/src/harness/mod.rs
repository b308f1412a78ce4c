//! CLI workbench: dataset generation and manifests, internally computed
//! reference bounds, eta0 grid search, training, budgeted evaluation with the
//! percentage-gap metric, and CSV/plot-data reports.

mod commands;
mod config;
mod manifest;
mod report;

pub use commands::{
    build_oracle, cmd_evaluate, cmd_generate, cmd_gridsearch, cmd_reference, cmd_report, cmd_train,
    train_log_path, write_best_table, write_train_log, BestCell, EvalOutcome, GridSearchOutcome,
    ETA0_GRID,
};
pub use config::{GeneratorConfig, HarnessConfig, Method, ProblemKind, SolverSection};
pub use manifest::{gap_pct, DatasetManifest, InstanceEntry, Split, MANIFEST_FILE};
pub use report::{
    read_result_rows, read_series_records, write_report, write_result_rows,
    write_series_records, IterationRecord, ReportPaths, ResultRow, RESULT_HEADER, SERIES_HEADER,
};
