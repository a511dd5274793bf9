//! Adam, the plateau learning-rate schedule and the training loop.

pub mod adam;
pub mod scheduler;
pub mod trainer;

pub use adam::{adam_step, AdamSettings, AdamState};
pub use scheduler::{PlateauScheduler, SchedulerSettings};
pub use trainer::{sig6, train, EpochRecord, OutputDir, TrainConfig, TrainState, METRICS_HEADER};
