//! The attentive write: after each decoder step the encoder outputs are
//! rewritten as external memory.
//!
//! For every memory row `t`:
//!
//! ```text
//! α_t   = σ(f_α([s, c, h_t]))          per-row gate, "how much to keep"
//! u     = tanh(f_u([s; c]))            one update shared by all rows
//! h'_t  = α_t h_t + (1 − α_t) u
//! ```
//!
//! `f_α` and `f_u` are one-hidden-layer tanh perceptrons. Since every
//! encoder output is tanh-bounded and `u` is too, each new row is a convex
//! combination of values in `[−1, 1]` and stays there.
//!
//! Memory versions are ordinary tape nodes; a write creates a new version
//! and never mutates the old one.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// One version of the memory: an `n × d` matrix whose rows are the states
/// attention reads from.
#[derive(Clone, Copy, Debug)]
pub struct ScratchpadMemory {
    pub states: Var,
    pub version: usize,
    pub len: usize,
    pub width: usize,
}

impl ScratchpadMemory {
    /// Version 0, built from the encoder's per-position outputs.
    pub fn from_states(tape: &mut Tape, states: &[Var]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("memory"));
        }
        let matrix = tape.stack_rows(states)?;
        let shape = tape.shape(matrix);
        let (len, width) = (shape[0], shape[1]);
        Ok(ScratchpadMemory { states: matrix, version: 0, len, width })
    }

    pub fn row_values<'t>(&self, tape: &'t Tape, t: usize) -> &'t [f64] {
        tape.value(self.states).row(t)
    }

    pub fn values<'t>(&self, tape: &'t Tape) -> &'t Tensor {
        tape.value(self.states)
    }
}

/// `f_α`: hidden layer over `[s; c; h_t]` split into column blocks, then a
/// scalar output.
#[derive(Clone, Copy, Debug)]
pub struct GateWeights {
    pub w_state: Var,
    pub w_context: Var,
    pub w_memory: Var,
    pub b_hidden: Var,
    /// `[hidden]`
    pub w_out: Var,
    /// `[1]`
    pub b_out: Var,
}

/// `f_u`: hidden layer over `[s; c]`, output of memory width.
#[derive(Clone, Copy, Debug)]
pub struct UpdateWeights {
    pub w_state: Var,
    pub w_context: Var,
    pub b_hidden: Var,
    pub w_out: Var,
    pub b_out: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct WriteWeights {
    pub gate: GateWeights,
    pub update: UpdateWeights,
}

/// `(suffix, shape)` of every write parameter, in canonical order.
pub fn param_shapes(state: usize, memory: usize, hidden: usize) -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("gate.W_state", vec![hidden, state]),
        ("gate.W_context", vec![hidden, memory]),
        ("gate.W_memory", vec![hidden, memory]),
        ("gate.b_hidden", vec![hidden]),
        ("gate.w_out", vec![hidden]),
        ("gate.b_out", vec![1]),
        ("update.W_state", vec![hidden, state]),
        ("update.W_context", vec![hidden, memory]),
        ("update.b_hidden", vec![hidden]),
        ("update.W_out", vec![memory, hidden]),
        ("update.b_out", vec![memory]),
    ]
}

impl WriteWeights {
    pub fn resolve(mut lookup: impl FnMut(&str) -> Result<Var>) -> Result<Self> {
        Ok(WriteWeights {
            gate: GateWeights {
                w_state: lookup("gate.W_state")?,
                w_context: lookup("gate.W_context")?,
                w_memory: lookup("gate.W_memory")?,
                b_hidden: lookup("gate.b_hidden")?,
                w_out: lookup("gate.w_out")?,
                b_out: lookup("gate.b_out")?,
            },
            update: UpdateWeights {
                w_state: lookup("update.W_state")?,
                w_context: lookup("update.W_context")?,
                b_hidden: lookup("update.b_hidden")?,
                w_out: lookup("update.W_out")?,
                b_out: lookup("update.b_out")?,
            },
        })
    }
}

/// Gates and update produced by one write.
#[derive(Clone, Copy, Debug)]
pub struct WriteRecord {
    /// `[n]`, each in `(0, 1)`.
    pub gates: Var,
    /// `[d]`, each in `[−1, 1]`.
    pub update: Var,
}

/// `W_s s + W_c c + b`
fn shared_hidden(tape: &mut Tape, s: Var, c: Var, ws: Var, wc: Var, b: Var) -> Result<Var> {
    let a = tape.matmul(ws, s)?;
    let k = tape.matmul(wc, c)?;
    let sum = tape.add(a, k)?;
    Ok(tape.add(sum, b)?)
}

/// `u = tanh(f_u([s; c]))`
pub fn compute_update(tape: &mut Tape, s: Var, c: Var, w: &UpdateWeights) -> Result<Var> {
    let pre = shared_hidden(tape, s, c, w.w_state, w.w_context, w.b_hidden)?;
    let hidden = tape.tanh(pre);
    let out = tape.affine(w.w_out, hidden, Some(w.b_out))?;
    Ok(tape.tanh(out))
}

/// `α_t = σ(f_α([s; c; h_t]))` for a single memory row.
pub fn compute_gate(tape: &mut Tape, s: Var, c: Var, h: Var, w: &GateWeights) -> Result<Var> {
    let shared = shared_hidden(tape, s, c, w.w_state, w.w_context, w.b_hidden)?;
    let own = tape.matmul(w.w_memory, h)?;
    let pre = tape.add(shared, own)?;
    let hidden = tape.tanh(pre);
    let logit = tape.matmul(w.w_out, hidden)?;
    let logit = tape.add(logit, w.b_out)?;
    Ok(tape.sigmoid(logit))
}

/// Gates for every row of `memory` at once; the `[s; c]` part of the hidden
/// layer is computed once and shared.
pub fn compute_gates(
    tape: &mut Tape,
    s: Var,
    c: Var,
    memory: &ScratchpadMemory,
    w: &GateWeights,
) -> Result<Var> {
    let shared = shared_hidden(tape, s, c, w.w_state, w.w_context, w.b_hidden)?;
    let shared = tape.repeat_rows(shared, memory.len)?;
    let wt = tape.transpose(w.w_memory)?;
    let own = tape.matmul(memory.states, wt)?;
    let pre = tape.add(own, shared)?;
    let hidden = tape.tanh(pre);
    let logits = tape.matmul(hidden, w.w_out)?;
    let logits = tape.add(logits, w.b_out)?;
    Ok(tape.sigmoid(logits))
}

/// `h'_t = α_t h_t + (1 − α_t) u` for every row.
pub fn apply_write(
    tape: &mut Tape,
    memory: &ScratchpadMemory,
    gates: Var,
    update: Var,
) -> Result<ScratchpadMemory> {
    if tape.value(gates).numel() != memory.len || tape.value(update).numel() != memory.width {
        return Err(crate::autodiff::TensorError::ShapeMismatch {
            op: "scratchpad write",
            lhs: vec![memory.len, memory.width],
            rhs: vec![tape.value(gates).numel(), tape.value(update).numel()],
        }
        .into());
    }
    let keep = tape.repeat_cols(gates, memory.width)?;
    let overwrite = tape.rsub_scalar(1.0, keep)?;
    let fresh = tape.repeat_rows(update, memory.len)?;
    let kept = tape.mul(keep, memory.states)?;
    let written = tape.mul(overwrite, fresh)?;
    let states = tape.add(kept, written)?;
    Ok(ScratchpadMemory { states, version: memory.version + 1, ..*memory })
}

/// One full write from decoder state `s` and context `c`. With `pin_gates`
/// every gate is the constant 1, which leaves the memory unchanged.
pub fn write(
    tape: &mut Tape,
    memory: &ScratchpadMemory,
    s: Var,
    c: Var,
    w: &WriteWeights,
    pin_gates: bool,
) -> Result<(ScratchpadMemory, WriteRecord)> {
    let gates = if pin_gates {
        tape.constant(Tensor::full(&[memory.len], 1.0))
    } else {
        compute_gates(tape, s, c, memory, &w.gate)?
    };
    let update = compute_update(tape, s, c, &w.update)?;
    let next = apply_write(tape, memory, gates, update)?;
    Ok((next, WriteRecord { gates, update }))
}
