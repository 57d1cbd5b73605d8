//! Attention scores, the attention distribution and the attentive read,
//! plus the attentional combination used for output and input feeding.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::scratchpad::ScratchpadMemory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// `sᵀ W h`
    General,
    /// `W1 (W2 [s; h])`, optionally with a tanh between the two maps.
    Mlp,
}

#[derive(Clone, Copy, Debug)]
pub enum ScoreWeights {
    General {
        /// `[decoder width, memory width]`
        w: Var,
    },
    Mlp {
        /// State block of `W2`, `[k, decoder width]`.
        w2_state: Var,
        /// Memory block of `W2`, `[k, memory width]`.
        w2_memory: Var,
        /// `[k]`
        w1: Var,
        tanh: bool,
    },
}

/// Scores, distribution and context for one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct AttentionRecord {
    pub scores: Var,
    pub distribution: Var,
    pub context: Var,
}

pub fn score_general(tape: &mut Tape, s: Var, h: Var, w: Var) -> Result<Var> {
    let sw = tape.matmul(s, w)?;
    Ok(tape.matmul(sw, h)?)
}

/// Single-position score `W1 (W2 [s; h])`; the concatenation is split into
/// the two column blocks of `W2`.
pub fn score_mlp(
    tape: &mut Tape,
    s: Var,
    h: Var,
    w2_state: Var,
    w2_memory: Var,
    w1: Var,
    tanh: bool,
) -> Result<Var> {
    let a = tape.matmul(w2_state, s)?;
    let b = tape.matmul(w2_memory, h)?;
    let mut hidden = tape.add(a, b)?;
    if tanh {
        hidden = tape.tanh(hidden);
    }
    Ok(tape.matmul(w1, hidden)?)
}

/// Scores for every memory row at once.
pub fn score_all(tape: &mut Tape, s: Var, memory: Var, weights: &ScoreWeights) -> Result<Var> {
    match *weights {
        ScoreWeights::General { w } => {
            let sw = tape.matmul(s, w)?;
            Ok(tape.matmul(memory, sw)?)
        }
        ScoreWeights::Mlp { w2_state, w2_memory, w1, tanh } => {
            let n = tape.shape(memory)[0];
            let wt = tape.transpose(w2_memory)?;
            let per_row = tape.matmul(memory, wt)?;
            let shared = tape.matmul(w2_state, s)?;
            let shared = tape.repeat_rows(shared, n)?;
            let mut hidden = tape.add(per_row, shared)?;
            if tanh {
                hidden = tape.tanh(hidden);
            }
            Ok(tape.matmul(hidden, w1)?)
        }
    }
}

/// Softmax the scores (masked positions get zero mass) and read the
/// distribution-weighted average of the memory rows.
pub fn read(
    tape: &mut Tape,
    scores: Var,
    memory: &ScratchpadMemory,
    valid: Option<&[bool]>,
) -> Result<AttentionRecord> {
    let distribution = tape.softmax(scores, valid)?;
    let context = tape.matmul(distribution, memory.states)?;
    Ok(AttentionRecord { scores, distribution, context })
}

/// Attend from decoder state `s` over the current memory version.
pub fn attend(
    tape: &mut Tape,
    s: Var,
    memory: &ScratchpadMemory,
    valid: Option<&[bool]>,
    weights: &ScoreWeights,
) -> Result<AttentionRecord> {
    let scores = score_all(tape, s, memory.states, weights)?;
    read(tape, scores, memory, valid)
}

/// `tanh(W_c [c; s])`
pub fn combine(tape: &mut Tape, s: Var, context: Var, w_c: Var) -> Result<Var> {
    let joined = tape.concat(&[context, s], 0)?;
    let pre = tape.matmul(w_c, joined)?;
    Ok(tape.tanh(pre))
}
