use rand::Rng;

use super::{label_smoothed_nll, ModelConfig, ModelParameters, WriteState};
use crate::attention::{attend, combine, AttentionRecord, ScoreKind, ScoreWeights};
use crate::autodiff::{argmax, SeededRng, Tape, Tensor, Var};
use crate::cells::{cell_step, encode_sequence, init_decoder_state, CellKind, CellState, CellWeights, EncoderWeights};
use crate::coverage::{attend_with_coverage, coverage_loss, coverage_update, CoverageState};
use crate::data::{BOS, EOS};
use crate::error::{Error, Result};
use crate::scratchpad::{self, ScratchpadMemory, WriteRecord, WriteWeights};

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub cell: CellWeights,
    /// Layer-norm gain and bias for residual layers.
    pub norm: Option<(Var, Var)>,
}

/// Typed handles to every parameter on a tape.
#[derive(Clone, Debug)]
pub struct ModelWeights {
    pub src_embed: Var,
    pub tgt_embed: Var,
    pub encoder: EncoderWeights,
    pub init_w: Var,
    pub init_b: Var,
    pub decoder: Vec<DecoderLayer>,
    pub score: ScoreWeights,
    pub coverage_w: Option<Var>,
    pub combine: Var,
    pub out_w: Var,
    pub out_b: Var,
    pub write: Option<WriteWeights>,
}

impl ModelWeights {
    /// Build from `lookup(full parameter name)`.
    pub fn resolve(config: &ModelConfig, mut lookup: impl FnMut(&str) -> Result<Var>) -> Result<Self> {
        let kind = config.cell;
        let dirs: &[&str] = if config.bidirectional { &["fwd", "bwd"] } else { &["fwd"] };
        let mut layers = Vec::new();
        for l in 0..config.encoder_layers {
            let mut cells = Vec::new();
            for dir in dirs {
                cells.push(CellWeights::resolve(kind, |n| lookup(&format!("enc.l{l}.{dir}.{n}")))?);
            }
            layers.push(cells);
        }
        let encoder = EncoderWeights { layers, hidden: config.hidden };
        let src_embed = lookup("src_embed")?;
        let tgt_embed = lookup("tgt_embed")?;
        let init_w = lookup("init.W")?;
        let init_b = lookup("init.b")?;
        let mut decoder = Vec::new();
        for l in 0..config.decoder_layers {
            let cell = CellWeights::resolve(kind, |n| lookup(&format!("dec.l{l}.{n}")))?;
            let norm = if l > 0 && config.residual {
                Some((lookup(&format!("dec.l{l}.ln_gain"))?, lookup(&format!("dec.l{l}.ln_bias"))?))
            } else {
                None
            };
            decoder.push(DecoderLayer { cell, norm });
        }
        let score = match config.score {
            ScoreKind::General => ScoreWeights::General { w: lookup("attn.W")? },
            ScoreKind::Mlp => ScoreWeights::Mlp {
                w2_state: lookup("attn.W2_state")?,
                w2_memory: lookup("attn.W2_memory")?,
                w1: lookup("attn.W1")?,
                tanh: config.score_tanh,
            },
        };
        let coverage_w = if config.coverage { Some(lookup("attn.coverage_w")?) } else { None };
        let write = if config.scratchpad {
            Some(WriteWeights::resolve(|n| lookup(&format!("write.{n}")))?)
        } else {
            None
        };
        Ok(ModelWeights {
            src_embed,
            tgt_embed,
            encoder,
            init_w,
            init_b,
            decoder,
            score,
            coverage_w,
            combine: lookup("combine.W")?,
            out_w: lookup("out.W")?,
            out_b: lookup("out.b")?,
            write,
        })
    }
}

/// Parameters placed on a tape, in canonical order.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
    pub weights: ModelWeights,
}

impl Bound {
    /// `trainable` decides whether gradients are tracked.
    pub fn new(tape: &mut Tape, params: &ModelParameters, config: &ModelConfig, trainable: bool) -> Result<Self> {
        params.check_against(config)?;
        let vars: Vec<Var> =
            params.tensors.values().map(|t| tape.leaf(t.clone(), trainable)).collect();
        let weights = ModelWeights::resolve(config, |name| {
            let i = params
                .tensors
                .get_index_of(name)
                .ok_or_else(|| Error::Mismatch(format!("no parameter named {name}")))?;
            Ok(vars[i])
        })?;
        Ok(Bound { vars, weights })
    }

    /// Gradients after `tape.backward`, zero where a parameter was unused.
    pub fn gradients(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .map(|&v| tape.grad(v).map_or_else(|| vec![0.0; tape.value(v).numel()], <[f64]>::to_vec))
            .collect()
    }
}

/// Per-step decoder bundle.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub layers: Vec<CellState>,
    /// Previous attentional state, fed back as cell input.
    pub feed: Var,
    pub coverage: Option<CoverageState>,
    /// Number of completed output steps.
    pub step: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct StepTrace {
    pub attention: AttentionRecord,
    pub write: Option<WriteRecord>,
    /// Log-distribution over the target vocabulary.
    pub log_probs: Var,
    pub coverage_penalty: Option<Var>,
}

/// Loss pieces for one sequence pair.
#[derive(Clone, Debug)]
pub struct SequenceLoss {
    /// Sum of per-token smoothed cross-entropies.
    pub nll: Var,
    /// Sum of per-step coverage penalties (unweighted).
    pub coverage: Option<Var>,
    pub tokens: usize,
    pub traces: Vec<StepTrace>,
}

/// A model configuration together with its weights on some tape.
#[derive(Clone, Copy)]
pub struct Network<'a> {
    pub config: &'a ModelConfig,
    pub weights: &'a ModelWeights,
}

impl<'a> Network<'a> {
    pub fn new(config: &'a ModelConfig, weights: &'a ModelWeights) -> Self {
        Network { config, weights }
    }

    fn embed(&self, tape: &mut Tape, table: Var, id: usize) -> Result<Var> {
        let row = tape.embedding(table, &[id])?;
        Ok(tape.reshape(row, vec![self.config.embed_dim])?)
    }

    /// Run the encoder and build the initial decoder state and memory.
    pub fn encode(
        &self,
        tape: &mut Tape,
        source: &[usize],
        rng: &mut SeededRng,
        training: bool,
    ) -> Result<(DecoderState, ScratchpadMemory)> {
        if source.is_empty() {
            return Err(Error::Empty("source sequence"));
        }
        let inputs = source
            .iter()
            .map(|&id| self.embed(tape, self.weights.src_embed, id))
            .collect::<Result<Vec<_>>>()?;
        let enc = encode_sequence(tape, &inputs, &self.weights.encoder, self.config.dropout, rng, training)?;
        let s0 = init_decoder_state(tape, &enc, self.weights.init_w, self.weights.init_b)?;
        let h = self.config.hidden;
        let layers = (0..self.config.decoder_layers)
            .map(|_| CellState {
                hidden: s0,
                cell: match self.config.cell {
                    CellKind::Lstm => Some(tape.constant(Tensor::zeros(&[h]))),
                    CellKind::Gru => None,
                },
            })
            .collect();
        let memory = ScratchpadMemory::from_states(tape, &enc.states)?;
        let coverage = self.config.coverage.then(|| CoverageState::zeros(tape, memory.len));
        let feed = tape.constant(Tensor::zeros(&[h]));
        Ok((DecoderState { layers, feed, coverage, step: 0 }, memory))
    }

    /// Recurrent update, attentive read, output distribution, then write.
    pub fn decode_step(
        &self,
        tape: &mut Tape,
        state: &DecoderState,
        memory: &ScratchpadMemory,
        prev_token: usize,
        rng: &mut SeededRng,
        training: bool,
    ) -> Result<(DecoderState, ScratchpadMemory, StepTrace)> {
        let w = self.weights;
        let p = self.config.dropout;
        let emb = self.embed(tape, w.tgt_embed, prev_token)?;
        let mut input = tape.concat(&[emb, state.feed], 0)?;
        let mut layers = Vec::with_capacity(state.layers.len());
        for (l, (layer, prev)) in w.decoder.iter().zip(&state.layers).enumerate() {
            if l > 0 {
                input = tape.dropout(input, p, rng, training)?;
            }
            let next = cell_step(tape, input, prev, &layer.cell)?;
            input = match layer.norm {
                Some((gain, bias)) => {
                    let res = tape.add(next.hidden, input)?;
                    tape.layer_norm(res, gain, bias)?
                }
                None => next.hidden,
            };
            layers.push(next);
        }
        let s = input;

        let (attention, coverage, coverage_penalty) = match (&state.coverage, w.coverage_w) {
            (Some(cov), Some(cw)) => {
                let rec = attend_with_coverage(tape, s, memory, None, &w.score, cov, cw)?;
                let penalty = coverage_loss(tape, cov, rec.distribution)?;
                let next = coverage_update(tape, cov, rec.distribution)?;
                (rec, Some(next), Some(penalty))
            }
            _ => (attend(tape, s, memory, None, &w.score)?, None, None),
        };

        let combined = combine(tape, s, attention.context, w.combine)?;
        let dropped = tape.dropout(combined, p, rng, training)?;
        let logits = tape.affine(w.out_w, dropped, Some(w.out_b))?;
        let log_probs = tape.log_softmax(logits)?;

        let (memory, write) = match &w.write {
            Some(ww) => {
                let ws = match self.config.write_state {
                    WriteState::Attentional => combined,
                    WriteState::Recurrent => s,
                };
                let (m, rec) = scratchpad::write(
                    tape,
                    memory,
                    ws,
                    attention.context,
                    ww,
                    self.config.pin_write_gates,
                )?;
                (m, Some(rec))
            }
            None => (*memory, None),
        };

        let next = DecoderState { layers, feed: combined, coverage, step: state.step + 1 };
        Ok((next, memory, StepTrace { attention, write, log_probs, coverage_penalty }))
    }

    /// Scheduled-sampling forward pass over one pair. The target sequence is
    /// `target` followed by end-of-sequence; the first input is the start
    /// token. Before every later step a coin is drawn: below `p_teacher`
    /// the gold token is fed, otherwise the model's own argmax.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_teacher_forced(
        &self,
        tape: &mut Tape,
        source: &[usize],
        target: &[usize],
        p_teacher: f64,
        label_smoothing: f64,
        rng: &mut SeededRng,
        training: bool,
    ) -> Result<SequenceLoss> {
        if target.is_empty() {
            return Err(Error::Empty("target sequence"));
        }
        let (mut state, mut memory) = self.encode(tape, source, rng, training)?;
        let gold: Vec<usize> = target.iter().copied().chain([EOS]).collect();
        let mut prev = BOS;
        let mut nll: Option<Var> = None;
        let mut cov: Option<Var> = None;
        let mut traces: Vec<StepTrace> = Vec::with_capacity(gold.len());
        for (i, &g) in gold.iter().enumerate() {
            if i > 0 {
                let coin: f64 = rng.gen();
                prev = match traces.last() {
                    Some(t) if coin >= p_teacher => argmax(tape.value(t.log_probs).data()),
                    _ => gold[i - 1],
                };
            }
            let (next_state, next_memory, trace) = self.decode_step(tape, &state, &memory, prev, rng, training)?;
            let l = label_smoothed_nll(tape, trace.log_probs, g, label_smoothing)?;
            nll = Some(match nll {
                Some(acc) => tape.add(acc, l)?,
                None => l,
            });
            if let Some(pen) = trace.coverage_penalty {
                cov = Some(match cov {
                    Some(acc) => tape.add(acc, pen)?,
                    None => pen,
                });
            }
            traces.push(trace);
            state = next_state;
            memory = next_memory;
        }
        Ok(SequenceLoss { nll: nll.expect("at least one step"), coverage: cov, tokens: gold.len(), traces })
    }
}
