//! Q8 metrics, prediction and the ablation harnesses.

pub mod ablation;
pub mod inference;
pub mod metrics;

pub use ablation::{run_study, AblationData, AblationReport, AblationRow, Study, Variant};
pub use inference::{evaluate, evaluate_dataset, predict, Evaluation};
pub use metrics::{argmax, confusion, q8_accuracy, Confusion, EvalReport};
