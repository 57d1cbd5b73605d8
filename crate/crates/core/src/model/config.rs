use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::ScoreKind;
use crate::cells::CellKind;
use crate::error::{Error, Result};

/// Which decoder vector plays the role of `s` in the write gate and update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WriteState {
    /// The tanh-combined state used for the output projection.
    Attentional,
    /// The top decoder layer's recurrent output.
    Recurrent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub cell: CellKind,
    pub embed_dim: usize,
    /// Per-direction encoder width and decoder width.
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub bidirectional: bool,
    pub score: ScoreKind,
    /// Hidden width of the MLP score; 0 means `hidden`.
    pub score_hidden: usize,
    pub score_tanh: bool,
    pub scratchpad: bool,
    pub write_state: WriteState,
    /// Force every write gate to 1 (memory never changes).
    pub pin_write_gates: bool,
    pub coverage: bool,
    pub coverage_lambda: f64,
    /// Residual connections with layer norm on decoder layers above the first.
    pub residual: bool,
    pub dropout: f64,
    pub init_scale: f64,
    /// Vocabulary sizes including reserved tokens; 0 means "fill from data".
    pub src_vocab: usize,
    pub tgt_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cell: CellKind::Gru,
            embed_dim: 32,
            hidden: 64,
            encoder_layers: 1,
            decoder_layers: 1,
            bidirectional: true,
            score: ScoreKind::General,
            score_hidden: 0,
            score_tanh: false,
            scratchpad: true,
            write_state: WriteState::Attentional,
            pin_write_gates: false,
            coverage: false,
            coverage_lambda: 1.0,
            residual: false,
            dropout: 0.1,
            init_scale: 0.08,
            src_vocab: 0,
            tgt_vocab: 0,
        }
    }
}

impl ModelConfig {
    /// Width of each memory row.
    pub fn memory_width(&self) -> usize {
        self.hidden * self.directions()
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn score_width(&self) -> usize {
        if self.score_hidden == 0 {
            self.hidden
        } else {
            self.score_hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("model.{field}: {why}")));
        if self.embed_dim == 0 {
            return bad("embed_dim", "must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be positive");
        }
        if self.encoder_layers == 0 {
            return bad("encoder_layers", "must be at least 1");
        }
        if self.decoder_layers == 0 {
            return bad("decoder_layers", "must be at least 1");
        }
        if self.scratchpad && self.coverage {
            return bad("coverage", "scratchpad and coverage cannot both be enabled");
        }
        if self.pin_write_gates && !self.scratchpad {
            return bad("pin_write_gates", "requires scratchpad = true");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must be in [0, 1)");
        }
        if !(self.coverage_lambda >= 0.0 && self.coverage_lambda.is_finite()) {
            return bad("coverage_lambda", "must be a finite non-negative number");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale", "must be a finite non-negative number");
        }
        if self.residual && self.hidden < 2 {
            return bad("residual", "layer norm needs hidden >= 2");
        }
        Ok(())
    }

    /// Validation that also requires the vocabulary sizes to be known.
    pub fn validate_complete(&self) -> Result<()> {
        self.validate()?;
        for (field, v) in [("src_vocab", self.src_vocab), ("tgt_vocab", self.tgt_vocab)] {
            if v <= crate::data::RESERVED.len() {
                return Err(Error::Config(format!(
                    "model.{field}: {v} leaves no room beyond the reserved tokens"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_string(self).expect("model config serialises");
        Sha256::digest(json.as_bytes()).into()
    }
}
