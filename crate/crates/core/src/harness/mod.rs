//! Experiment runner: configuration, convergence and price studies, and
//! report output.

pub mod config;
pub mod fit;
pub mod report;
pub mod study;

pub use config::{ExperimentConfig, GridConfig, Reference, ReportFormat, StudyConfig, StudyKind};
pub use fit::{loglog_fit, ols, pre_floor_prefix, prefix_slopes, rmse, LineFit};
pub use report::{write_csv, write_json, write_report};
pub use study::{run, Report};
