//! Optimizer, learning-rate schedule, training loop, checkpoints and the
//! experiment pipeline built on them.

mod checkpoint;
mod config;
mod lr;
mod optim;
mod pipeline;
mod trainer;

pub use checkpoint::{Checkpoint, RngState, TrainState, MAGIC, SCHEMA_VERSION};
pub use config::{DataConfig, DiffusionConfig, ModelConfig, RunConfig, ScheduleName};
pub use lr::LrSchedule;
pub use optim::{AdamW, AdamWConfig};
pub use pipeline::{build_model, model_config, train_prepared, train_run, Prepared, SplitSet, TrainedModel};
pub use trainer::{EpochReport, Sample, TrainConfig, Trainer, DIVERGENCE_LOSS};
