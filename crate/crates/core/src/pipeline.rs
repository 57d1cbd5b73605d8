//! The commands behind the CLI. Each one reads and writes files under a run
//! directory:
//!
//! ```text
//! config.resolved.toml   vocab.json   data/{train,valid,test}.tsv
//! metrics.jsonl   steps.jsonl   checkpoints/epoch_NNN.ckpt   checkpoints/final.ckpt
//! eval/metrics.json   eval/outputs.tsv
//! analysis/entropy_cdf.csv   analysis/heatmap_NNN.{attention,gates}.csv
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TaskConfig};
use crate::data::{digest_pairs, generate, load_tsv, write_tsv, Pair, ParallelCorpus, Vocabulary, RESERVED};
use crate::decoding::{decode, DecodeOptions, Hypothesis};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::metrics::{
    corpus_bleu, entropy_report, export_heatmap, mean_rouge_l, repetition_rate, token_accuracy, write_cdf_csv,
    EntropyStats, Heatmap, MetricsSummary,
};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParameters};
use crate::train::{average_checkpoints, final_checkpoint, train, Dataset, EncodedPair, TrainOutcome};

pub const CONFIG_FILE: &str = "config.resolved.toml";
pub const VOCAB_FILE: &str = "vocab.json";
const BLEU_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunVocab {
    pub source: Vocabulary,
    pub target: Vocabulary,
}

impl RunVocab {
    /// Both sides are built from the training split only.
    pub fn from_training(pairs: &[Pair]) -> Self {
        RunVocab { source: Vocabulary::source_side(pairs), target: Vocabulary::target_side(pairs) }
    }

    pub fn encode(&self, pairs: &[Pair]) -> Vec<EncodedPair> {
        pairs
            .iter()
            .map(|p| EncodedPair { source: self.source.encode(&p.source), target: self.target.encode(&p.target) })
            .collect()
    }
}

/// Generate or load the three splits described by `task`.
pub fn prepare_corpus(task: &TaskConfig, seed: u64) -> Result<ParallelCorpus> {
    match task.kind.generator() {
        Some(kind) => generate(
            kind,
            [task.train_size, task.valid_size, task.test_size],
            task.min_len..=task.max_len,
            task.vocab,
            seed,
        ),
        None => {
            let load = |p: &Option<PathBuf>, field: &str| match p {
                Some(p) => load_tsv(p),
                None => Err(Error::Config(format!("task.{field}: required when task.kind = \"tsv\""))),
            };
            Ok(ParallelCorpus {
                train: load(&task.train, "train")?,
                valid: load(&task.valid, "valid")?,
                test: load(&task.test, "test")?,
            })
        }
    }
}

/// The model block with vocabulary sizes taken from the data.
pub fn complete_model(model: &ModelConfig, vocab: &RunVocab) -> Result<ModelConfig> {
    let mut m = model.clone();
    for (field, given, actual) in
        [("model.src_vocab", &mut m.src_vocab, vocab.source.len()), ("model.tgt_vocab", &mut m.tgt_vocab, vocab.target.len())]
    {
        if *given != 0 && *given != actual {
            return Err(Error::Config(format!("{field}: set to {given} but the training data gives {actual}")));
        }
        *given = actual;
    }
    m.validate_complete()?;
    Ok(m)
}

/// Write the three splits as TSV files into `dir`.
pub fn write_corpus(corpus: &ParallelCorpus, dir: &Path) -> Result<()> {
    write_tsv(&dir.join("train.tsv"), &corpus.train)?;
    write_tsv(&dir.join("valid.tsv"), &corpus.valid)?;
    write_tsv(&dir.join("test.tsv"), &corpus.test)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    write_file(path, text + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|source| Error::Json { path: path.into(), source })
}

/// Snapshot the config, data and vocabulary, then train.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate(Path::new(""))?;
    let dir = &config.output_dir;
    let corpus = prepare_corpus(&config.task, config.seed)?;
    let vocab = RunVocab::from_training(&corpus.train);
    let model = complete_model(&config.model, &vocab)?;
    config.write(&dir.join(CONFIG_FILE))?;
    write_json(&dir.join(VOCAB_FILE), &vocab)?;
    write_corpus(&corpus, &dir.join("data"))?;
    let data = Dataset { train: vocab.encode(&corpus.train), valid: vocab.encode(&corpus.valid) };
    train(&model, &config.training, config.seed, &data, dir)
}

/// A trained run loaded back from disk.
#[derive(Clone, Debug)]
pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub model: ModelConfig,
    pub vocab: RunVocab,
    pub params: ModelParameters,
}

impl Run {
    /// Load `dir`, using `checkpoint` instead of the final average if given.
    pub fn open(dir: &Path, checkpoint: Option<&Path>) -> Result<Run> {
        let text = read_to_string(&dir.join(CONFIG_FILE))?;
        let config = crate::config::parse_config(&text, &dir.join(CONFIG_FILE), &[])?;
        let vocab: RunVocab = read_json(&dir.join(VOCAB_FILE))?;
        let model = complete_model(&config.model, &vocab)?;
        let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| final_checkpoint(dir));
        let params = load_checkpoint(&ckpt, &model)?;
        Ok(Run { dir: dir.to_path_buf(), config, model, vocab, params })
    }

    /// The run's test split, or `test` when given.
    pub fn test_pairs(&self, test: Option<&Path>) -> Result<Vec<Pair>> {
        let path = test.map(Path::to_path_buf).unwrap_or_else(|| self.dir.join("data").join("test.tsv"));
        load_tsv(&path)
    }

    pub fn decode_all(&self, pairs: &[Pair], opts: &DecodeOptions) -> Result<Vec<Hypothesis>> {
        if pairs.is_empty() {
            return Err(Error::Empty("test set"));
        }
        pairs.iter().map(|p| decode(&self.params, &self.model, &self.vocab.source.encode(&p.source), opts)).collect()
    }
}

/// Entropy statistics of every decoder step, in `base`.
pub fn step_entropies(hyps: &[Hypothesis], base: f64) -> Result<EntropyStats> {
    let mut stats = entropy_report(hyps.iter().flat_map(|h| h.steps.iter().map(|s| s.attention.as_slice())))?;
    let scale = base.ln();
    if scale != 1.0 {
        for v in stats.entropies.iter_mut().chain(stats.sorted.iter_mut()) {
            *v /= scale;
        }
        stats.mean /= scale;
    }
    Ok(stats)
}

/// Metrics of `hyps` against the targets of `pairs`.
pub fn summarize(hyps: &[Hypothesis], pairs: &[Pair], vocab: &RunVocab, entropy_base: f64) -> Result<MetricsSummary> {
    let outputs: Vec<Vec<String>> = hyps.iter().map(|h| vocab.target.decode(&h.tokens)).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.target.clone()).collect();
    let nonempty: Vec<&Vec<String>> = outputs.iter().filter(|o| !o.is_empty()).collect();
    let repetition = if nonempty.is_empty() {
        0.0
    } else {
        nonempty.iter().map(|o| repetition_rate(o)).sum::<Result<f64>>()? / nonempty.len() as f64
    };
    let exact = outputs.iter().zip(&refs).filter(|(o, r)| o == r).count() as f64 / refs.len() as f64;
    Ok(MetricsSummary {
        bleu: corpus_bleu(&outputs, &refs, BLEU_ORDER)?,
        rouge_l: mean_rouge_l(&outputs, &refs),
        mean_entropy: step_entropies(hyps, entropy_base)?.mean,
        repetition_rate: repetition,
        token_accuracy: token_accuracy(&outputs, &refs)?,
        exact_match: exact,
        sentences: refs.len(),
        test_digest: digest_pairs(pairs),
    })
}

/// Options shared by evaluate and analyze.
#[derive(Clone, Debug, Default)]
pub struct EvalRequest {
    pub checkpoint: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub beam: Option<usize>,
    pub max_len: Option<usize>,
}

impl EvalRequest {
    fn options(&self, run: &Run) -> Result<DecodeOptions> {
        let mut opts = run.config.decode;
        if let Some(b) = self.beam {
            opts.beam = b;
        }
        if let Some(m) = self.max_len {
            opts.max_len = m;
        }
        opts.validate()?;
        Ok(opts)
    }
}

/// Decode the test set and write `eval/metrics.json` and `eval/outputs.tsv`.
pub fn cmd_evaluate(run_dir: &Path, req: &EvalRequest) -> Result<MetricsSummary> {
    let run = Run::open(run_dir, req.checkpoint.as_deref())?;
    let opts = req.options(&run)?;
    let pairs = run.test_pairs(req.test.as_deref())?;
    let hyps = run.decode_all(&pairs, &opts)?;
    let summary = summarize(&hyps, &pairs, &run.vocab, run.config.analysis.entropy_base)?;
    let mut table = String::from("source\treference\toutput\n");
    for (p, h) in pairs.iter().zip(&hyps) {
        let _ = writeln!(table, "{}\t{}\t{}", p.source.join(" "), p.target.join(" "), run.vocab.target.decode(&h.tokens).join(" "));
    }
    write_file(&run_dir.join("eval").join("outputs.tsv"), table)?;
    write_json(&run_dir.join("eval").join("metrics.json"), &summary)?;
    Ok(summary)
}

/// Heatmap of one decode. Rows are labelled by the emitted token, with the
/// end marker for a finished hypothesis' last step.
pub fn heatmap(pair: &Pair, hyp: &Hypothesis, vocab: &RunVocab) -> Heatmap {
    let mut output = vocab.target.decode(&hyp.tokens);
    if hyp.finished {
        output.push(RESERVED[crate::data::EOS].to_string());
    }
    let gates = hyp.steps.iter().map(|s| s.gates.clone()).collect::<Option<Vec<_>>>();
    Heatmap {
        source: pair.source.clone(),
        output,
        attention: hyp.steps.iter().map(|s| s.attention.clone()).collect(),
        gates,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub stats: EntropyStats,
    pub files: Vec<PathBuf>,
}

/// Decode with traces and write the entropy CDF plus heatmaps for the first
/// `analysis.heatmaps` sentences.
pub fn cmd_analyze(run_dir: &Path, req: &EvalRequest) -> Result<Analysis> {
    let run = Run::open(run_dir, req.checkpoint.as_deref())?;
    let opts = req.options(&run)?;
    let pairs = run.test_pairs(req.test.as_deref())?;
    let hyps = run.decode_all(&pairs, &opts)?;
    let stats = step_entropies(&hyps, run.config.analysis.entropy_base)?;
    let out = run_dir.join("analysis");
    let cdf = out.join("entropy_cdf.csv");
    write_cdf_csv(&cdf, &stats)?;
    let mut files = vec![cdf];
    for (i, (p, h)) in pairs.iter().zip(&hyps).take(run.config.analysis.heatmaps).enumerate() {
        files.extend(export_heatmap(&heatmap(p, h, &run.vocab), &out.join(format!("heatmap_{i:03}")))?);
    }
    Ok(Analysis { stats, files })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub a: MetricsSummary,
    pub b: MetricsSummary,
}

impl Comparison {
    /// Whether run A's mean attention entropy is strictly lower.
    pub fn a_lower_entropy(&self) -> bool {
        self.a.mean_entropy < self.b.mean_entropy
    }

    pub fn table(&self) -> String {
        let rows = [
            ("bleu", self.a.bleu, self.b.bleu),
            ("rouge_l", self.a.rouge_l, self.b.rouge_l),
            ("mean_entropy", self.a.mean_entropy, self.b.mean_entropy),
            ("repetition_rate", self.a.repetition_rate, self.b.repetition_rate),
            ("token_accuracy", self.a.token_accuracy, self.b.token_accuracy),
            ("exact_match", self.a.exact_match, self.b.exact_match),
        ];
        let mut out = format!("{:<16} {:>12} {:>12} {:>12}\n", "metric", "A", "B", "A - B");
        for (name, a, b) in rows {
            let _ = writeln!(out, "{name:<16} {a:>12.6} {b:>12.6} {:>12.6}", a - b);
        }
        out
    }
}

/// Compare the evaluation summaries of two runs on the same test set.
pub fn cmd_compare(a: &Path, b: &Path) -> Result<Comparison> {
    let a: MetricsSummary = read_json(&a.join("eval").join("metrics.json"))?;
    let b: MetricsSummary = read_json(&b.join("eval").join("metrics.json"))?;
    if a.test_digest != b.test_digest {
        return Err(Error::Mismatch(format!(
            "runs were evaluated on different test sets ({} vs {})",
            a.test_digest, b.test_digest
        )));
    }
    Ok(Comparison { a, b })
}

/// Generate the configured corpus into `out_dir` without training.
pub fn cmd_gen_data(config: &RunConfig, out_dir: &Path) -> Result<ParallelCorpus> {
    config.validate(Path::new(""))?;
    let corpus = prepare_corpus(&config.task, config.seed)?;
    write_corpus(&corpus, out_dir)?;
    Ok(corpus)
}

/// Average checkpoints of the run in `run_dir` and save the result to `out`.
pub fn cmd_average(run_dir: &Path, checkpoints: &[PathBuf], out: &Path) -> Result<ModelParameters> {
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoint list"));
    }
    let text = read_to_string(&run_dir.join(CONFIG_FILE))?;
    let config = crate::config::parse_config(&text, &run_dir.join(CONFIG_FILE), &[])?;
    let vocab: RunVocab = read_json(&run_dir.join(VOCAB_FILE))?;
    let model = complete_model(&config.model, &vocab)?;
    let avg = average_checkpoints(checkpoints, &model)?;
    save_checkpoint(&avg, &model, out)?;
    Ok(avg)
}
