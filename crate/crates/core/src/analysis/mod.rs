//! Experiment runners producing CSV reports.

pub mod comparison;
pub mod montecarlo;
pub mod prop1;
pub mod prop2;
pub mod run_metrics;

pub use comparison::{run_comparison, standard_variants, ComparisonRow, Variant};
pub use prop1::{run_prop1, Prop1Report};
pub use prop2::{run_prop2, Prop2Config, Prop2Row};
pub use run_metrics::RunMetrics;
