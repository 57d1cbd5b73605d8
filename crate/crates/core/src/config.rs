//! Run configuration: one TOML file with task, model, training, decoding
//! and analysis blocks. `key=value` overrides take precedence over the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::TaskKind;
use crate::decoding::DecodeOptions;
use crate::error::{read_to_string, write_file, Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSource {
    Copy,
    Reverse,
    Dedup,
    /// Tab-separated files given by `train`, `valid` and `test`.
    Tsv,
}

impl TaskSource {
    pub fn generator(self) -> Option<TaskKind> {
        match self {
            TaskSource::Copy => Some(TaskKind::Copy),
            TaskSource::Reverse => Some(TaskKind::Reverse),
            TaskSource::Dedup => Some(TaskKind::Dedup),
            TaskSource::Tsv => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskSource,
    #[serde(default = "default_vocab")]
    pub vocab: usize,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_eval_size")]
    pub valid_size: usize,
    #[serde(default = "default_eval_size")]
    pub test_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

fn default_vocab() -> usize {
    20
}
fn default_min_len() -> usize {
    4
}
fn default_max_len() -> usize {
    12
}
fn default_train_size() -> usize {
    2000
}
fn default_eval_size() -> usize {
    200
}

impl TaskConfig {
    pub fn synthetic(kind: TaskSource) -> Self {
        TaskConfig {
            kind,
            vocab: default_vocab(),
            min_len: default_min_len(),
            max_len: default_max_len(),
            train_size: default_train_size(),
            valid_size: default_eval_size(),
            test_size: default_eval_size(),
            train: None,
            valid: None,
            test: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Logarithm base for entropies.
    pub entropy_base: f64,
    /// Number of test sentences exported as heatmaps.
    pub heatmaps: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { entropy_base: std::f64::consts::E, heatmaps: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub task: TaskConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub decode: DecodeOptions,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_seed() -> u64 {
    1
}

impl RunConfig {
    /// Field-level checks. Relative TSV paths are resolved against `base`.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let bad = |f: &str, why: String| Err(Error::Config(format!("{f}: {why}")));
        let t = &self.task;
        match t.kind {
            TaskSource::Tsv => {
                for (f, p) in [("task.train", &t.train), ("task.valid", &t.valid), ("task.test", &t.test)] {
                    let Some(p) = p else {
                        return bad(f, "required when task.kind = \"tsv\"".into());
                    };
                    if !base.join(p).is_file() {
                        return bad(f, format!("{} does not exist", base.join(p).display()));
                    }
                }
            }
            _ => {
                if t.vocab < 2 {
                    return bad("task.vocab", "must be at least 2".into());
                }
                if t.min_len == 0 || t.min_len > t.max_len {
                    return bad("task.min_len", format!("need 1 <= min_len <= max_len, got {}..{}", t.min_len, t.max_len));
                }
                if t.train_size == 0 {
                    return bad("task.train_size", "must be positive".into());
                }
            }
        }
        self.model.validate()?;
        self.training.validate()?;
        self.decode.validate()?;
        if !(self.analysis.entropy_base > 1.0 && self.analysis.entropy_base.is_finite()) {
            return bad("analysis.entropy_base", "must be a finite number above 1".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_toml()?)
    }
}

/// Parse `value` as a TOML literal, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Apply a dotted `key=value` override to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

/// Build a config from TOML text plus overrides.
pub fn parse_config(text: &str, origin: &Path, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    RunConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))
}

/// Read, override and validate a config file.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let (text, origin, base) = match path {
        Some(p) => (read_to_string(p)?, p.to_path_buf(), p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (String::new(), PathBuf::from("<overrides>"), PathBuf::new()),
    };
    let mut config = parse_config(&text, &origin, overrides)?;
    for p in [&mut config.task.train, &mut config.task.valid, &mut config.task.test].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    config.validate(Path::new(""))?;
    Ok(config)
}
