//! Optimisation: Adam, clipping, learning-rate decay, checkpoint averaging,
//! batching and the training loop.

mod batching;
mod optim;
mod trainer;

pub use crate::model::label_smoothed_nll;
pub use batching::{epoch_order, make_batches};
pub use optim::{
    adam_step, average_parameters, clip_grad_norm, global_norm, lr_plateau_decay, AdamConfig, OptimizerState,
};
pub use trainer::{
    epoch_checkpoint, final_checkpoint, read_jsonl, train, validation_loss, Dataset, EncodedPair, EpochRecord,
    StepRecord, TrainOutcome, TrainingConfig,
};

use std::path::Path;

use crate::error::Result;
use crate::model::{load_checkpoint, ModelConfig, ModelParameters};

/// Average the parameters stored in `paths`.
pub fn average_checkpoints(paths: &[impl AsRef<Path>], config: &ModelConfig) -> Result<ModelParameters> {
    let sets = paths.iter().map(|p| load_checkpoint(p.as_ref(), config)).collect::<Result<Vec<_>>>()?;
    average_parameters(&sets)
}
