use indexmap::IndexMap;
use rand::Rng;

use super::ModelConfig;
use crate::attention::ScoreKind;
use crate::autodiff::{derive_rng, Tensor};
use crate::error::{Error, Result};
use crate::scratchpad;

/// Stream id for parameter initialisation.
const INIT_STREAM: u64 = 1;

/// Every parameter name and shape for `config`, in canonical order.
///
/// Write-network parameters come last so that a model with the scratchpad
/// and one without it draw identical initial values for everything else.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (e, h) = (config.embed_dim, config.hidden);
    let d_enc = config.memory_width();
    let mut out: Vec<(String, Vec<usize>)> = vec![
        ("src_embed".into(), vec![config.src_vocab, e]),
        ("tgt_embed".into(), vec![config.tgt_vocab, e]),
    ];
    let dirs: &[&str] = if config.bidirectional { &["fwd", "bwd"] } else { &["fwd"] };
    for l in 0..config.encoder_layers {
        let input = if l == 0 { e } else { d_enc };
        for dir in dirs {
            for (n, s) in config.cell.param_shapes(input, h) {
                out.push((format!("enc.l{l}.{dir}.{n}"), s));
            }
        }
    }
    out.push(("init.W".into(), vec![h, d_enc]));
    out.push(("init.b".into(), vec![h]));
    for l in 0..config.decoder_layers {
        let input = if l == 0 { e + h } else { h };
        for (n, s) in config.cell.param_shapes(input, h) {
            out.push((format!("dec.l{l}.{n}"), s));
        }
        if l > 0 && config.residual {
            out.push((format!("dec.l{l}.ln_gain"), vec![h]));
            out.push((format!("dec.l{l}.ln_bias"), vec![h]));
        }
    }
    match config.score {
        ScoreKind::General => out.push(("attn.W".into(), vec![h, d_enc])),
        ScoreKind::Mlp => {
            let k = config.score_width();
            out.push(("attn.W2_state".into(), vec![k, h]));
            out.push(("attn.W2_memory".into(), vec![k, d_enc]));
            out.push(("attn.W1".into(), vec![k]));
        }
    }
    if config.coverage {
        out.push(("attn.coverage_w".into(), vec![1]));
    }
    out.push(("combine.W".into(), vec![h, d_enc + h]));
    out.push(("out.W".into(), vec![config.tgt_vocab, h]));
    out.push(("out.b".into(), vec![config.tgt_vocab]));
    if config.scratchpad {
        for (n, s) in scratchpad::param_shapes(h, d_enc, h) {
            out.push((format!("write.{n}"), s));
        }
    }
    out
}

/// Named parameter tensors in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    pub tensors: IndexMap<String, Tensor>,
}

impl ModelParameters {
    /// Uniform initialisation in `[-init_scale, init_scale]`; layer-norm
    /// gains start at 1 and biases at 0.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate_complete()?;
        let mut rng = derive_rng(seed, &[INIT_STREAM]);
        let a = config.init_scale;
        let mut tensors = IndexMap::new();
        for (name, shape) in parameter_shapes(config) {
            let t = if name.ends_with("ln_gain") {
                Tensor::full(&shape, 1.0)
            } else if name.ends_with("ln_bias") {
                Tensor::zeros(&shape)
            } else {
                let n = shape.iter().product();
                let data = (0..n).map(|_| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 }).collect();
                Tensor::new(shape, data)?
            };
            tensors.insert(name, t);
        }
        Ok(ModelParameters { tensors })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate_complete()?;
        let tensors = parameter_shapes(config)
            .into_iter()
            .map(|(n, s)| {
                let t = Tensor::zeros(&s);
                (n, t)
            })
            .collect();
        Ok(ModelParameters { tensors })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::Mismatch(format!("no parameter named {name}")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Compare names and shapes against what `config` requires; the error
    /// lists every missing, unexpected and mis-shaped tensor.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let expected = parameter_shapes(config);
        let mut problems = Vec::new();
        for (name, shape) in &expected {
            match self.tensors.get(name) {
                None => problems.push(format!("missing {name}")),
                Some(t) if t.shape() != shape.as_slice() => {
                    problems.push(format!("{name}: shape {:?}, expected {shape:?}", t.shape()))
                }
                _ => {}
            }
        }
        for name in self.tensors.keys() {
            if !expected.iter().any(|(n, _)| n == name) {
                problems.push(format!("unexpected {name}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Mismatch(format!("parameters do not match config: {}", problems.join(", "))))
        }
    }

    /// Put tensors back into canonical order for `config`.
    pub fn canonicalize(&mut self, config: &ModelConfig) -> Result<()> {
        self.check_against(config)?;
        let mut ordered = IndexMap::new();
        for (name, _) in parameter_shapes(config) {
            let t = self.tensors.swap_remove(&name).expect("checked above");
            ordered.insert(name, t);
        }
        self.tensors = ordered;
        Ok(())
    }
}
