//! Greedy and beam-search inference.
//!
//! All hypotheses of one sentence share a tape; each carries its own
//! decoder state and memory version, so siblings never see each other's
//! writes.

use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, seeded_rng, Tape};
use crate::data::{BOS, EOS};
use crate::error::{Error, Result};
use crate::model::{Bound, DecoderState, ModelConfig, ModelParameters, Network, StepTrace};
use crate::scratchpad::ScratchpadMemory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeOptions {
    pub beam: usize,
    pub max_len: usize,
    /// End-of-sequence id; `None` decodes exactly `max_len` tokens.
    #[serde(skip)]
    pub eos: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { beam: 4, max_len: 64, eos: Some(EOS) }
    }
}

impl DecodeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Config("decode.beam: must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("decode.max_len: must be at least 1".into()));
        }
        Ok(())
    }
}

/// Plain values of one decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepValues {
    pub attention: Vec<f64>,
    pub gates: Option<Vec<f64>>,
    pub update: Option<Vec<f64>>,
    pub log_probs: Vec<f64>,
}

impl StepValues {
    fn read(tape: &Tape, t: &StepTrace) -> Self {
        StepValues {
            attention: tape.value(t.attention.distribution).data().to_vec(),
            gates: t.write.map(|w| tape.value(w.gates).data().to_vec()),
            update: t.write.map(|w| tape.value(w.update).data().to_vec()),
            log_probs: tape.value(t.log_probs).data().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, without the end-of-sequence marker.
    pub tokens: Vec<usize>,
    /// Sum of the chosen per-step log-probabilities (end marker included).
    pub log_prob: f64,
    pub finished: bool,
    pub steps: Vec<StepValues>,
}

impl Hypothesis {
    /// Number of decoder steps taken, end marker included.
    pub fn length(&self) -> usize {
        self.steps.len()
    }

    /// Log-probability divided by step count.
    pub fn normalized_score(&self) -> f64 {
        self.log_prob / self.length().max(1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct BeamResult {
    pub best: Hypothesis,
    /// All surviving hypotheses, best first.
    pub nbest: Vec<Hypothesis>,
}

#[derive(Clone)]
struct Live {
    tokens: Vec<usize>,
    log_prob: f64,
    finished: bool,
    traces: Vec<StepTrace>,
    state: DecoderState,
    memory: ScratchpadMemory,
}

impl Live {
    fn freeze(&self, tape: &Tape) -> Hypothesis {
        Hypothesis {
            tokens: self.tokens.clone(),
            log_prob: self.log_prob,
            finished: self.finished,
            steps: self.traces.iter().map(|t| StepValues::read(tape, t)).collect(),
        }
    }
}

/// Argmax decoding until the end marker or `max_len` steps.
pub fn greedy_decode(net: &Network, tape: &mut Tape, source: &[usize], opts: &DecodeOptions) -> Result<Hypothesis> {
    opts.validate()?;
    let mut rng = seeded_rng(0);
    let (mut state, mut memory) = net.encode(tape, source, &mut rng, false)?;
    let mut hyp = Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false, steps: Vec::new() };
    let mut prev = BOS;
    for _ in 0..opts.max_len {
        let (s, m, trace) = net.decode_step(tape, &state, &memory, prev, &mut rng, false)?;
        let lp = tape.value(trace.log_probs).data();
        let tok = argmax(lp);
        hyp.log_prob += lp[tok];
        hyp.steps.push(StepValues::read(tape, &trace));
        if Some(tok) == opts.eos {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(tok);
        (state, memory, prev) = (s, m, tok);
    }
    Ok(hyp)
}

/// Beam search. At each step the live hypotheses are expanded by every
/// token, pooled with the frozen finished ones, and the `beam` best by
/// cumulative log-probability survive. Search stops once every survivor
/// is finished or `max_len` steps were taken; survivors are then ranked by
/// length-normalised score.
pub fn beam_decode(net: &Network, tape: &mut Tape, source: &[usize], opts: &DecodeOptions) -> Result<BeamResult> {
    opts.validate()?;
    let mut rng = seeded_rng(0);
    let (state, memory) = net.encode(tape, source, &mut rng, false)?;
    let mut pool = vec![Live { tokens: Vec::new(), log_prob: 0.0, finished: false, traces: Vec::new(), state, memory }];
    for _ in 0..opts.max_len {
        if pool.iter().all(|h| h.finished) {
            break;
        }
        // (pool index, token or None for a frozen hypothesis, score)
        let mut candidates: Vec<(usize, Option<usize>, f64)> = Vec::new();
        let mut stepped = Vec::with_capacity(pool.len());
        for (i, h) in pool.iter().enumerate() {
            if h.finished {
                candidates.push((i, None, h.log_prob));
                stepped.push(None);
                continue;
            }
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let out = net.decode_step(tape, &h.state, &h.memory, prev, &mut rng, false)?;
            for (tok, lp) in tape.value(out.2.log_probs).data().iter().enumerate() {
                candidates.push((i, Some(tok), h.log_prob + lp));
            }
            stepped.push(Some(out));
        }
        // Stable order: score, then earlier parent, then smaller token.
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
        candidates.truncate(opts.beam);
        let mut next = Vec::with_capacity(candidates.len());
        for (i, tok, score) in candidates {
            let parent = &pool[i];
            match (tok, &stepped[i]) {
                (None, _) => next.push(parent.clone()),
                (Some(tok), Some((state, memory, trace))) => {
                    let mut traces = parent.traces.clone();
                    traces.push(*trace);
                    let finished = Some(tok) == opts.eos;
                    let mut tokens = parent.tokens.clone();
                    if !finished {
                        tokens.push(tok);
                    }
                    next.push(Live { tokens, log_prob: score, finished, traces, state: state.clone(), memory: *memory });
                }
                (Some(_), None) => unreachable!("only live hypotheses are expanded"),
            }
        }
        pool = next;
    }
    let mut nbest: Vec<Hypothesis> = pool.iter().map(|h| h.freeze(tape)).collect();
    nbest.sort_by(|a, b| b.normalized_score().total_cmp(&a.normalized_score()));
    let best = nbest[0].clone();
    Ok(BeamResult { best, nbest })
}

/// Decode one source with frozen parameters: greedy when `beam == 1`.
pub fn decode(params: &ModelParameters, config: &ModelConfig, source: &[usize], opts: &DecodeOptions) -> Result<Hypothesis> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, config, false)?;
    let net = Network::new(config, &bound.weights);
    if opts.beam == 1 {
        greedy_decode(&net, &mut tape, source, opts)
    } else {
        Ok(beam_decode(&net, &mut tape, source, opts)?.best)
    }
}
