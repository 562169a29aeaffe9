//! Metrics, the localisation harness and the experiment runner.

pub mod experiment;
pub mod forest;
pub mod localiser;
pub mod metrics;
pub mod report;
pub mod results;

pub use experiment::{run_experiment, run_repeat, summarize, ArmSummary, ExperimentOptions, Prerequisites};
pub use localiser::{train_localiser, Localiser, LocaliserGrid};
pub use metrics::{class_weights, macro_f1, mivo, per_class_accuracy, Mivo};
