//! Sequence-to-sequence models with attention, an optional gated rewrite of
//! the encoder states after every decoder step, and a coverage baseline,
//! together with training, decoding and attention-entropy analysis.

pub mod attention;
pub mod autodiff;
pub mod cells;
pub mod config;
pub mod coverage;
pub mod data;
pub mod decoding;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scratchpad;
pub mod train;

pub use error::{Error, Result};
