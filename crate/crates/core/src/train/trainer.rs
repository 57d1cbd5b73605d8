use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batching::{epoch_order, make_batches};
use super::optim::{adam_step, average_parameters, clip_grad_norm, lr_plateau_decay, AdamConfig, OptimizerState};
use crate::autodiff::{derive_rng, Tape, Tensor};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::model::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Bound, ModelConfig, ModelParameters,
    Network,
};

const TRAIN_STREAM: u64 = 3;
const VALID_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub label_smoothing: f64,
    pub lr_decay: f64,
    /// Probability of feeding the gold previous token at each step.
    pub teacher_forcing: f64,
    pub epochs: usize,
    /// Maximum summed source (and target) tokens per batch.
    pub batch_tokens: usize,
    /// Number of trailing epoch checkpoints averaged into the final model.
    pub average_last: usize,
    /// Stop after this many epochs without a new best validation loss; 0 disables.
    pub early_stopping_patience: usize,
    /// Record elapsed seconds in the metric log (makes it non-reproducible).
    pub log_wall_time: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 2.0,
            label_smoothing: 0.1,
            lr_decay: 0.7,
            teacher_forcing: 0.5,
            epochs: 15,
            batch_tokens: 2000,
            average_last: 5,
            early_stopping_patience: 0,
            log_wall_time: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, why: &str| Err(Error::Config(format!("training.{f}: {why}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be a positive number");
        }
        for (f, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(f, "must be in [0, 1)");
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm", "must be positive");
        }
        for (f, v) in [("label_smoothing", self.label_smoothing), ("teacher_forcing", self.teacher_forcing)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(f, "must be in [0, 1]");
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay", "must be in (0, 1]");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.batch_tokens == 0 {
            return bad("batch_tokens", "must be at least 1");
        }
        if self.average_last == 0 {
            return bad("average_last", "must be at least 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

/// Token-id pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<EncodedPair>,
    pub valid: Vec<EncodedPair>,
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub wall_time: Option<f64>,
}

/// One line of `steps.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub lr: f64,
}

/// Resumable progress, written after every epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainState {
    epochs_completed: usize,
    lr: f64,
    val_history: Vec<f64>,
    best_val: f64,
    epochs_since_best: usize,
    stopped_early: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_params: ModelParameters,
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub fn epoch_checkpoint(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join("checkpoints").join(format!("epoch_{epoch:03}.ckpt"))
}

pub fn final_checkpoint(run_dir: &Path) -> PathBuf {
    run_dir.join("checkpoints").join("final.ckpt")
}

/// Loss of one batch: `(Σ smoothed NLL + λ Σ coverage) / tokens`, with
/// gradients when `grads` is set.
#[allow(clippy::too_many_arguments)]
fn batch_objective(
    params: &ModelParameters,
    model: &ModelConfig,
    pairs: &[&EncodedPair],
    p_teacher: f64,
    smoothing: f64,
    rng: &mut crate::autodiff::SeededRng,
    training: bool,
    grads: bool,
) -> Result<(f64, usize, Option<Vec<Vec<f64>>>)> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, model, grads)?;
    let net = Network::new(model, &bound.weights);
    let mut total = None;
    let mut tokens = 0;
    for pair in pairs {
        let out = net.forward_teacher_forced(&mut tape, &pair.source, &pair.target, p_teacher, smoothing, rng, training)?;
        let mut obj = out.nll;
        if let Some(c) = out.coverage {
            let scaled = tape.scale(c, model.coverage_lambda);
            obj = tape.add(obj, scaled)?;
        }
        total = Some(match total {
            Some(acc) => tape.add(acc, obj)?,
            None => obj,
        });
        tokens += out.tokens;
    }
    let total = total.ok_or(Error::Empty("batch"))?;
    let sum = tape.value(total).item();
    if !grads {
        return Ok((sum, tokens, None));
    }
    let mean = tape.scale(total, 1.0 / tokens as f64);
    tape.backward(mean)?;
    Ok((sum, tokens, Some(bound.gradients(&tape))))
}

/// Mean per-token smoothed cross-entropy under teacher forcing, without
/// dropout or the coverage term.
pub fn validation_loss(params: &ModelParameters, model: &ModelConfig, pairs: &[EncodedPair], smoothing: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let plain = ModelConfig { coverage_lambda: 0.0, ..model.clone() };
    let mut rng = derive_rng(0, &[VALID_STREAM]);
    let (mut sum, mut tokens) = (0.0, 0);
    for chunk in pairs.chunks(16) {
        let refs: Vec<&EncodedPair> = chunk.iter().collect();
        let (s, t, _) = batch_objective(params, &plain, &refs, 1.0, smoothing, &mut rng, false, false)?;
        sum += s;
        tokens += t;
    }
    Ok(sum / tokens as f64)
}

fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(record).map_err(|source| Error::Json { path: path.into(), source })?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|source| Error::Json { path: path.into(), source }))
        .collect()
}

/// Keep only records of completed epochs, so a resumed run continues the
/// logs exactly where the saved state left off.
fn truncate_log(path: &Path, keep_through: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = read_to_string(path)?;
    let mut kept = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|source| Error::Json { path: path.into(), source })?;
        if v["epoch"].as_u64().is_some_and(|e| e as usize <= keep_through) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    write_file(path, kept)
}

fn save_optimizer(opt: &OptimizerState, params: &ModelParameters, path: &Path) -> Result<()> {
    let mut moments = indexmap::IndexMap::new();
    for (i, (name, t)) in params.tensors.iter().enumerate() {
        moments.insert(format!("m.{name}"), Tensor::new(t.shape().to_vec(), opt.m[i].clone())?);
        moments.insert(format!("v.{name}"), Tensor::new(t.shape().to_vec(), opt.v[i].clone())?);
    }
    moments.insert("step".into(), Tensor::vector(vec![opt.step as f64]));
    moments.insert("lr".into(), Tensor::vector(vec![opt.lr]));
    write_file(path, encode_checkpoint(&ModelParameters { tensors: moments }, [0; 32]))
}

fn load_optimizer(params: &ModelParameters, path: &Path) -> Result<OptimizerState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = decode_checkpoint(&bytes).map_err(|message| Error::Checkpoint { path: path.into(), message })?;
    let get = |n: &str| -> Result<Vec<f64>> {
        Ok(ck.params.get(n).map_err(|_| Error::Checkpoint { path: path.into(), message: format!("missing {n}") })?.data().to_vec())
    };
    let mut opt = OptimizerState::new(params, get("lr")?[0]);
    opt.step = get("step")?[0] as u64;
    for (i, name) in params.tensors.keys().enumerate() {
        opt.m[i] = get(&format!("m.{name}"))?;
        opt.v[i] = get(&format!("v.{name}"))?;
    }
    Ok(opt)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    write_file(path, text + "\n")
}

/// Train into `run_dir`, resuming when it holds saved progress.
pub fn train(
    model: &ModelConfig,
    cfg: &TrainingConfig,
    seed: u64,
    data: &Dataset,
    run_dir: &Path,
) -> Result<TrainOutcome> {
    model.validate_complete()?;
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let metrics_path = run_dir.join("metrics.jsonl");
    let steps_path = run_dir.join("steps.jsonl");
    let state_path = run_dir.join("state.json");
    let opt_path = run_dir.join("optimizer.ckpt");

    let (mut params, mut opt, mut state) = if state_path.exists() {
        let state: TrainState = serde_json::from_str(&read_to_string(&state_path)?)
            .map_err(|source| Error::Json { path: state_path.clone(), source })?;
        let params = load_checkpoint(&epoch_checkpoint(run_dir, state.epochs_completed), model)?;
        let opt = load_optimizer(&params, &opt_path)?;
        truncate_log(&metrics_path, state.epochs_completed)?;
        truncate_log(&steps_path, state.epochs_completed)?;
        (params, opt, state)
    } else {
        for p in [&metrics_path, &steps_path] {
            write_file(p, "")?;
        }
        let params = ModelParameters::init(model, seed)?;
        let opt = OptimizerState::new(&params, cfg.lr);
        let state = TrainState {
            epochs_completed: 0,
            lr: cfg.lr,
            val_history: Vec::new(),
            best_val: f64::INFINITY,
            epochs_since_best: 0,
            stopped_early: false,
        };
        (params, opt, state)
    };

    let lengths: Vec<(usize, usize)> = data.train.iter().map(|p| (p.source.len(), p.target.len() + 1)).collect();
    let batches = make_batches(&lengths, cfg.batch_tokens);
    let valid = if data.valid.is_empty() { &data.train } else { &data.valid };
    let adam = cfg.adam();
    let started = Instant::now();

    while state.epochs_completed < cfg.epochs && !state.stopped_early {
        let epoch = state.epochs_completed + 1;
        opt.lr = state.lr;
        let (mut loss_sum, mut token_sum) = (0.0, 0usize);
        for (b, &bi) in epoch_order(batches.len(), seed, epoch).iter().enumerate() {
            let pairs: Vec<&EncodedPair> = batches[bi].iter().map(|&i| &data.train[i]).collect();
            let mut rng = derive_rng(seed, &[TRAIN_STREAM, epoch as u64, b as u64]);
            let (sum, tokens, grads) =
                batch_objective(&params, model, &pairs, cfg.teacher_forcing, cfg.label_smoothing, &mut rng, true, true)?;
            let loss = sum / tokens as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite { what: format!("training loss at epoch {epoch}, batch {b}") });
            }
            let mut grads = grads.expect("gradients requested");
            let (grad_norm, clipped_norm) = clip_grad_norm(&mut grads, cfg.clip_norm);
            adam_step(&mut params, &grads, &mut opt, &adam)?;
            append_jsonl(&steps_path, &StepRecord { epoch, step: opt.step, loss, grad_norm, clipped_norm, lr: opt.lr })?;
            loss_sum += sum;
            token_sum += tokens;
        }
        let val_loss = validation_loss(&params, model, valid, cfg.label_smoothing)?;
        let record = EpochRecord {
            epoch,
            step: opt.step,
            train_loss: loss_sum / token_sum as f64,
            val_loss,
            lr: state.lr,
            wall_time: cfg.log_wall_time.then(|| started.elapsed().as_secs_f64()),
        };
        save_checkpoint(&params, model, &epoch_checkpoint(run_dir, epoch))?;
        append_jsonl(&metrics_path, &record)?;

        state.val_history.push(val_loss);
        state.lr = lr_plateau_decay(&state.val_history, state.lr, cfg.lr_decay);
        if val_loss < state.best_val {
            state.best_val = val_loss;
            state.epochs_since_best = 0;
        } else {
            state.epochs_since_best += 1;
        }
        state.stopped_early =
            cfg.early_stopping_patience > 0 && state.epochs_since_best >= cfg.early_stopping_patience;
        state.epochs_completed = epoch;
        opt.lr = state.lr;
        save_optimizer(&opt, &params, &opt_path)?;
        write_json(&state_path, &state)?;
    }

    let last = state.epochs_completed;
    let first = last.saturating_sub(cfg.average_last) + 1;
    let sets = (first..=last)
        .map(|e| load_checkpoint(&epoch_checkpoint(run_dir, e), model))
        .collect::<Result<Vec<_>>>()?;
    let final_params = average_parameters(&sets)?;
    save_checkpoint(&final_params, model, &final_checkpoint(run_dir))?;
    Ok(TrainOutcome { final_params, epochs: read_jsonl(&metrics_path)?, stopped_early: state.stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data() -> Dataset {
        let pairs = |n: usize, off: usize| -> Vec<EncodedPair> {
            (0..n)
                .map(|i| {
                    let s: Vec<usize> = (0..3 + (i + off) % 3).map(|k| 4 + (i * 7 + k * 3 + off) % 5).collect();
                    EncodedPair { source: s.clone(), target: s }
                })
                .collect()
        };
        Dataset { train: pairs(12, 0), valid: pairs(4, 1) }
    }

    fn toy_model() -> ModelConfig {
        ModelConfig { src_vocab: 9, tgt_vocab: 9, hidden: 6, embed_dim: 4, ..Default::default() }
    }

    #[test]
    fn validation_of_config() {
        TrainingConfig::default().validate().unwrap();
        let bad = TrainingConfig { lr_decay: 0.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("training.lr_decay"));
        let bad = TrainingConfig { teacher_forcing: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn resume_continues_identically() {
        let cfg = TrainingConfig { epochs: 3, batch_tokens: 20, ..Default::default() };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let full = train(&toy_model(), &cfg, 5, &toy_data(), a.path()).unwrap();
        let short = TrainingConfig { epochs: 2, ..cfg.clone() };
        train(&toy_model(), &short, 5, &toy_data(), b.path()).unwrap();
        let resumed = train(&toy_model(), &cfg, 5, &toy_data(), b.path()).unwrap();
        assert_eq!(full.epochs, resumed.epochs);
        for f in ["metrics.jsonl", "steps.jsonl", "checkpoints/epoch_003.ckpt", "checkpoints/final.ckpt"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn logs_and_final_average() {
        let cfg = TrainingConfig { epochs: 3, batch_tokens: 15, average_last: 2, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let out = train(&toy_model(), &cfg, 1, &toy_data(), dir.path()).unwrap();
        assert_eq!(out.epochs.len(), 3);
        assert!(out.epochs.iter().all(|r| r.wall_time.is_none()));
        let steps: Vec<StepRecord> = read_jsonl(&dir.path().join("steps.jsonl")).unwrap();
        assert_eq!(steps.len() as u64, out.epochs[2].step);
        assert!(steps.iter().all(|s| s.clipped_norm <= 2.0 + 1e-9));
        let e2 = load_checkpoint(&epoch_checkpoint(dir.path(), 2), &toy_model()).unwrap();
        let e3 = load_checkpoint(&epoch_checkpoint(dir.path(), 3), &toy_model()).unwrap();
        assert_eq!(out.final_params, average_parameters(&[e2, e3]).unwrap());
    }

    #[test]
    fn early_stopping() {
        // A learning rate this large makes validation loss stall quickly.
        let cfg = TrainingConfig { epochs: 30, lr: 0.5, early_stopping_patience: 1, batch_tokens: 200, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let out = train(&toy_model(), &cfg, 1, &toy_data(), dir.path()).unwrap();
        assert!(out.stopped_early);
        assert!(out.epochs.len() < 30);
    }

    #[test]
    fn single_example_loss_drops() {
        let data = Dataset {
            train: vec![EncodedPair { source: vec![4, 5, 6], target: vec![4, 5, 6] }],
            valid: vec![],
        };
        let model = ModelConfig { dropout: 0.0, ..toy_model() };
        let pair = &data.train[0];
        let before = ModelParameters::init(&model, 2).unwrap();
        let v0 = validation_loss(&before, &model, std::slice::from_ref(pair), 0.1).unwrap();
        let cfg = TrainingConfig { epochs: 1, teacher_forcing: 1.0, lr: 1e-3, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let out = train(&model, &cfg, 2, &data, dir.path()).unwrap();
        assert!(out.epochs[0].val_loss < v0);
    }
}
