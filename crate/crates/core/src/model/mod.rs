//! The full encoder / attention / scratchpad / output model, its parameter
//! store and checkpoint format.

mod checkpoint;
mod config;
mod loss;
mod network;
mod params;


pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint,
    FORMAT_VERSION, MAGIC,
};
pub use config::{ModelConfig, WriteState};
pub use loss::{label_smoothed_nll, smoothed_target};
pub use network::{
    Bound, DecoderLayer, DecoderState, ModelWeights, Network, SequenceLoss, StepTrace,
};
pub use params::{parameter_shapes, ModelParameters};
