//! GRU and LSTM cells and the stacked, optionally bidirectional encoder.

use serde::{Deserialize, Serialize};

use crate::autodiff::{SeededRng, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    /// Gate names in canonical order. Each gate has an input matrix `W_*`,
    /// a recurrent matrix `U_*` and a bias `b_*`.
    pub fn gates(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "h"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        }
    }

    /// `(suffix, shape)` for every parameter of one cell.
    pub fn param_shapes(self, input: usize, hidden: usize) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for g in self.gates() {
            out.push((format!("W_{g}"), vec![hidden, input]));
            out.push((format!("U_{g}"), vec![hidden, hidden]));
            out.push((format!("b_{g}"), vec![hidden]));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Gate {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

impl Gate {
    /// `W x + U h + b`
    fn preactivation(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let wx = tape.matmul(self.w, x)?;
        let uh = tape.matmul(self.u, h)?;
        let s = tape.add(wx, uh)?;
        Ok(tape.add(s, self.b)?)
    }
}

#[derive(Clone, Debug)]
pub struct GruWeights {
    pub update: Gate,
    pub reset: Gate,
    pub candidate: Gate,
}

#[derive(Clone, Debug)]
pub struct LstmWeights {
    pub input: Gate,
    pub forget: Gate,
    pub output: Gate,
    pub candidate: Gate,
}

#[derive(Clone, Debug)]
pub enum CellWeights {
    Gru(GruWeights),
    Lstm(LstmWeights),
}

impl CellWeights {
    /// Resolve a cell's parameters through `lookup(suffix)`.
    pub fn resolve(kind: CellKind, mut lookup: impl FnMut(&str) -> Result<Var>) -> Result<Self> {
        let mut gate = |g: &str| -> Result<Gate> {
            Ok(Gate { w: lookup(&format!("W_{g}"))?, u: lookup(&format!("U_{g}"))?, b: lookup(&format!("b_{g}"))? })
        };
        Ok(match kind {
            CellKind::Gru => CellWeights::Gru(GruWeights {
                update: gate("z")?,
                reset: gate("r")?,
                candidate: gate("h")?,
            }),
            CellKind::Lstm => CellWeights::Lstm(LstmWeights {
                input: gate("i")?,
                forget: gate("f")?,
                output: gate("o")?,
                candidate: gate("g")?,
            }),
        })
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellWeights::Gru(_) => CellKind::Gru,
            CellWeights::Lstm(_) => CellKind::Lstm,
        }
    }
}

/// Recurrent state; `cell` is present for LSTMs only.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub hidden: Var,
    pub cell: Option<Var>,
}

impl CellState {
    pub fn zeros(tape: &mut Tape, kind: CellKind, width: usize) -> Self {
        let hidden = tape.constant(Tensor::zeros(&[width]));
        let cell = match kind {
            CellKind::Gru => None,
            CellKind::Lstm => Some(tape.constant(Tensor::zeros(&[width]))),
        };
        CellState { hidden, cell }
    }
}

/// `h' = z ⊙ h + (1 − z) ⊙ tanh(W_h x + U_h (r ⊙ h) + b_h)`
pub fn gru_step(tape: &mut Tape, x: Var, prev: &CellState, w: &GruWeights) -> Result<CellState> {
    let h = prev.hidden;
    let z_pre = w.update.preactivation(tape, x, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = w.reset.preactivation(tape, x, h)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let cand_pre = w.candidate.preactivation(tape, x, rh)?;
    let cand = tape.tanh(cand_pre);
    let keep = tape.mul(z, h)?;
    let one_minus_z = tape.rsub_scalar(1.0, z)?;
    let fresh = tape.mul(one_minus_z, cand)?;
    let hidden = tape.add(keep, fresh)?;
    Ok(CellState { hidden, cell: None })
}

/// Gate activations of one LSTM step.
#[derive(Clone, Copy, Debug)]
pub struct LstmGates {
    pub input: Var,
    pub forget: Var,
    pub output: Var,
    pub candidate: Var,
}

pub fn lstm_step(
    tape: &mut Tape,
    x: Var,
    prev: &CellState,
    w: &LstmWeights,
) -> Result<(CellState, LstmGates)> {
    let h = prev.hidden;
    let c = prev
        .cell
        .ok_or_else(|| Error::Config("LSTM step needs a cell state".into()))?;
    let pre = w.input.preactivation(tape, x, h)?;
    let i = tape.sigmoid(pre);
    let pre = w.forget.preactivation(tape, x, h)?;
    let f = tape.sigmoid(pre);
    let pre = w.output.preactivation(tape, x, h)?;
    let o = tape.sigmoid(pre);
    let pre = w.candidate.preactivation(tape, x, h)?;
    let g = tape.tanh(pre);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let cell = tape.add(fc, ig)?;
    let squashed = tape.tanh(cell);
    let hidden = tape.mul(o, squashed)?;
    Ok((
        CellState { hidden, cell: Some(cell) },
        LstmGates { input: i, forget: f, output: o, candidate: g },
    ))
}

pub fn cell_step(tape: &mut Tape, x: Var, prev: &CellState, w: &CellWeights) -> Result<CellState> {
    match w {
        CellWeights::Gru(g) => gru_step(tape, x, prev, g),
        CellWeights::Lstm(l) => Ok(lstm_step(tape, x, prev, l)?.0),
    }
}

/// Top-layer encoder outputs plus the final states of the top layer.
#[derive(Clone, Debug)]
pub struct EncoderOutputs {
    /// One vector per source position; directions concatenated.
    pub states: Vec<Var>,
    pub final_forward: CellState,
    pub final_backward: Option<CellState>,
}

/// Per layer, the forward cell and (if bidirectional) the backward cell.
#[derive(Clone, Debug)]
pub struct EncoderWeights {
    pub layers: Vec<Vec<CellWeights>>,
    pub hidden: usize,
}

fn run_direction(
    tape: &mut Tape,
    inputs: &[Var],
    w: &CellWeights,
    hidden: usize,
    reverse: bool,
) -> Result<(Vec<Var>, CellState)> {
    let mut state = CellState::zeros(tape, w.kind(), hidden);
    let mut outputs = vec![state.hidden; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> =
        if reverse { Box::new((0..inputs.len()).rev()) } else { Box::new(0..inputs.len()) };
    for t in order {
        state = cell_step(tape, inputs[t], &state, w)?;
        outputs[t] = state.hidden;
    }
    Ok((outputs, state))
}

/// Run the stacked encoder over already-embedded inputs. Dropout is applied
/// to the inputs of every layer above the first.
pub fn encode_sequence(
    tape: &mut Tape,
    inputs: &[Var],
    weights: &EncoderWeights,
    dropout: f64,
    rng: &mut SeededRng,
    training: bool,
) -> Result<EncoderOutputs> {
    if inputs.is_empty() {
        return Err(Error::Empty("source sequence"));
    }
    let mut layer_inputs = inputs.to_vec();
    let mut finals = None;
    for (l, cells) in weights.layers.iter().enumerate() {
        if l > 0 {
            for x in layer_inputs.iter_mut() {
                *x = tape.dropout(*x, dropout, rng, training)?;
            }
        }
        let (fwd, fwd_final) = run_direction(tape, &layer_inputs, &cells[0], weights.hidden, false)?;
        match cells.get(1) {
            Some(bwd_cell) => {
                let (bwd, bwd_final) =
                    run_direction(tape, &layer_inputs, bwd_cell, weights.hidden, true)?;
                layer_inputs = fwd
                    .iter()
                    .zip(&bwd)
                    .map(|(f, b)| tape.concat(&[*f, *b], 0))
                    .collect::<std::result::Result<_, _>>()?;
                finals = Some((fwd_final, Some(bwd_final)));
            }
            None => {
                layer_inputs = fwd;
                finals = Some((fwd_final, None));
            }
        }
    }
    let (final_forward, final_backward) =
        finals.ok_or_else(|| Error::Config("encoder has no layers".into()))?;
    Ok(EncoderOutputs { states: layer_inputs, final_forward, final_backward })
}

/// `tanh(W [h_fwd; h_bwd] + b)`, the projection of the encoder's final
/// states to the decoder width.
pub fn init_decoder_state(tape: &mut Tape, enc: &EncoderOutputs, w: Var, b: Var) -> Result<Var> {
    let joined = match enc.final_backward {
        Some(bwd) => tape.concat(&[enc.final_forward.hidden, bwd.hidden], 0)?,
        None => enc.final_forward.hidden,
    };
    let pre = tape.affine(w, joined, Some(b))?;
    Ok(tape.tanh(pre))
}
