//! Parallel corpora, vocabularies and the synthetic transduction tasks.

mod tasks;
mod tsv;
mod vocab;

pub use tasks::{collapse_repeats, gen_copy, gen_dedup, gen_reverse, generate, TaskKind};
pub use tsv::{load_tsv, parse_tsv, write_tsv};
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One source/target example, whitespace-tokenized.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl Pair {
    pub fn new(source: Vec<String>, target: Vec<String>) -> Self {
        Pair { source, target }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub train: Vec<Pair>,
    pub valid: Vec<Pair>,
    pub test: Vec<Pair>,
}

/// Stable digest of a list of pairs, used to check two evaluations ran on
/// the same test set.
pub fn digest_pairs(pairs: &[Pair]) -> String {
    let mut hasher = Sha256::new();
    for p in pairs {
        hasher.update(p.source.join(" ").as_bytes());
        hasher.update(b"\t");
        hasher.update(p.target.join(" ").as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
