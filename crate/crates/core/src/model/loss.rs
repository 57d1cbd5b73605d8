use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::error::Result;

/// Smoothed target distribution: `1 − ε + ε/V` on the gold token and `ε/V`
/// everywhere else.
pub fn smoothed_target(vocab: usize, gold: usize, epsilon: f64) -> Result<Tensor> {
    if gold >= vocab {
        return Err(TensorError::IndexOutOfRange { index: gold, size: vocab }.into());
    }
    let mut t = vec![epsilon / vocab as f64; vocab];
    t[gold] += 1.0 - epsilon;
    Ok(Tensor::vector(t))
}

/// Cross-entropy of `log_probs` (a log-distribution over the vocabulary)
/// against the smoothed target.
pub fn label_smoothed_nll(tape: &mut Tape, log_probs: Var, gold: usize, epsilon: f64) -> Result<Var> {
    let vocab = tape.value(log_probs).numel();
    let target = smoothed_target(vocab, gold, epsilon)?;
    let weighted = tape.mul_const(log_probs, target)?;
    let total = tape.sum(weighted);
    Ok(tape.neg(total))
}
