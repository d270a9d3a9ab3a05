//! Optimization: schedules, AdamW and the training loops.

pub mod config;
pub mod dataset;
pub mod hooks;
pub mod loops;
pub mod optim;
pub mod schedule;

pub use config::TrainConfig;
pub use dataset::Dataset;
pub use hooks::{read_log, FileHooks, LogRecord, NoHooks, PlanRecorder, TrainHooks};
pub use loops::{
    band_indices, classification_top1, epoch_order, finetune, pretrain, FinetuneOutcome, ModelConfig, PretrainOutcome,
};
pub use optim::{adamw_step, AdamWConfig, OptimState};
pub use schedule::{lr_at, Decay, ScheduleConfig};
