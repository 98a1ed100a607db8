//! Seeded toy training harness for the full quantization-aware pipeline.
//!
//! A small tanh MLP is trained on synthetic regression data in four phases:
//! a float baseline, per-layer codebook fitting, training with the MRACos
//! penalty and periodic hard compression, and terminal compression into
//! packed layer files.

mod config;
mod model;
mod pipeline;
mod task;
mod train;

pub use config::{LayerSelection, LrSchedule, QatConfig};
pub use model::{Dense, Gradients, ToyModel};
pub use pipeline::{
    run_pipeline, run_pipeline_to_dir, LayerOutput, LogRecord, PipelineOutput, PipelineSummary,
    TrainingLog,
};
pub use task::{generate_task, Dataset, Task};
pub use train::{compress_model, evaluate_quantized, objective, train_step, QuantizedEval, Sgd, StepLosses};
