//! Metrics and report emission.

mod metrics;
mod report;
pub mod svg;

pub use metrics::{adp, error_stats, pct_error, pearson, ErrorStats};
pub use report::{
    bed_density_csv, correlation_csv, emit_report, per_part_csv, sig6, summary_csv, BedCell, Correlation, EvalReport,
    PartRow, SummaryRow, VariantRows, BED_CELL, TARGET_NAMES,
};
