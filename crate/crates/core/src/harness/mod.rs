//! Experiment orchestration: config, run matrix, result store and reports.

mod config;
mod report;
mod store;

pub use config::{CellFilter, ExperimentConfig, DEFAULT_RULES};
pub use report::{
    auc_grid, emit_auc_table, emit_curves, emit_overhead_table, no_attack_band_violations,
    overhead_rows, write_summaries, AucGrid, OverheadRow,
};
pub use store::{
    cell_header, expand_matrix, run_cell, run_matrix, CellHeader, CellLog, Manifest, ResultStore,
    RunCell, RunOptions, FORMAT_VERSION,
};
