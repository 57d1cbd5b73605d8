//! Coverage baseline: a running sum of past attention distributions that
//! feeds back into the score and into an auxiliary loss term.

use crate::attention::{read, score_all, AttentionRecord, ScoreWeights};
use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::error::Result;
use crate::scratchpad::ScratchpadMemory;

/// Cumulative attention mass per source position.
#[derive(Clone, Copy, Debug)]
pub struct CoverageState {
    pub coverage: Var,
    pub steps: usize,
}

impl CoverageState {
    pub fn zeros(tape: &mut Tape, n: usize) -> Self {
        CoverageState { coverage: tape.constant(Tensor::zeros(&[n])), steps: 0 }
    }
}

fn same_len(tape: &Tape, a: Var, b: Var, op: &'static str) -> Result<()> {
    if tape.value(a).numel() != tape.value(b).numel() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: tape.shape(a).to_vec(),
            rhs: tape.shape(b).to_vec(),
        }
        .into());
    }
    Ok(())
}

pub fn coverage_update(tape: &mut Tape, state: &CoverageState, a: Var) -> Result<CoverageState> {
    same_len(tape, state.coverage, a, "coverage update")?;
    let coverage = tape.add(state.coverage, a)?;
    Ok(CoverageState { coverage, steps: state.steps + 1 })
}

/// `Σ_t min(coverage_t, a_t)`
pub fn coverage_loss(tape: &mut Tape, state: &CoverageState, a: Var) -> Result<Var> {
    same_len(tape, state.coverage, a, "coverage loss")?;
    let m = tape.min(state.coverage, a)?;
    Ok(tape.sum(m))
}

/// Attention whose scores get an extra `w · coverage_t` term.
pub fn attend_with_coverage(
    tape: &mut Tape,
    s: Var,
    memory: &ScratchpadMemory,
    valid: Option<&[bool]>,
    weights: &ScoreWeights,
    coverage: &CoverageState,
    coverage_w: Var,
) -> Result<AttentionRecord> {
    let base = score_all(tape, s, memory.states, weights)?;
    same_len(tape, base, coverage.coverage, "coverage score")?;
    let extra = tape.mul(coverage.coverage, coverage_w)?;
    let scores = tape.add(base, extra)?;
    read(tape, scores, memory, valid)
}
