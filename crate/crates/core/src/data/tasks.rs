use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Pair, ParallelCorpus};
use crate::autodiff::{derive_rng, SeededRng};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Target equals source.
    Copy,
    /// Target is the reversed source.
    Reverse,
    /// Target is the source with consecutive duplicates collapsed.
    Dedup,
}

fn symbol(k: usize) -> String {
    format!("t{k}")
}

fn random_length(rng: &mut SeededRng, lengths: &RangeInclusive<usize>) -> usize {
    rng.gen_range(lengths.clone())
}

fn uniform_sequence(rng: &mut SeededRng, lengths: &RangeInclusive<usize>, vocab: usize) -> Vec<String> {
    let n = random_length(rng, lengths);
    (0..n).map(|_| symbol(rng.gen_range(0..vocab))).collect()
}

/// Sequences built from runs of 1-3 repeats so that collapsing them matters.
fn run_sequence(rng: &mut SeededRng, lengths: &RangeInclusive<usize>, vocab: usize) -> Vec<String> {
    let n = random_length(rng, lengths);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let tok = symbol(rng.gen_range(0..vocab));
        let run = rng.gen_range(1..=3).min(n - out.len());
        out.extend(std::iter::repeat_n(tok, run));
    }
    out
}

/// Drop every token equal to its predecessor.
pub fn collapse_repeats(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    for t in tokens {
        if out.last() != Some(t) {
            out.push(t.clone());
        }
    }
    out
}

fn example(kind: TaskKind, rng: &mut SeededRng, lengths: &RangeInclusive<usize>, vocab: usize) -> Pair {
    match kind {
        TaskKind::Copy => {
            let s = uniform_sequence(rng, lengths, vocab);
            Pair::new(s.clone(), s)
        }
        TaskKind::Reverse => {
            let s = uniform_sequence(rng, lengths, vocab);
            let mut t = s.clone();
            t.reverse();
            Pair::new(s, t)
        }
        TaskKind::Dedup => {
            let s = run_sequence(rng, lengths, vocab);
            let t = collapse_repeats(&s);
            Pair::new(s, t)
        }
    }
}

fn check_args(lengths: &RangeInclusive<usize>, vocab: usize) -> Result<()> {
    if vocab < 2 {
        return Err(Error::Config(format!("task vocab_size must be at least 2, got {vocab}")));
    }
    if lengths.is_empty() || *lengths.start() == 0 {
        return Err(Error::Config(format!("invalid length range {lengths:?}")));
    }
    Ok(())
}

fn gen_pairs(
    kind: TaskKind,
    n: usize,
    lengths: RangeInclusive<usize>,
    vocab: usize,
    seed: u64,
) -> Result<Vec<Pair>> {
    check_args(&lengths, vocab)?;
    Ok((0..n)
        .map(|i| example(kind, &mut derive_rng(seed, &[kind as u64, i as u64]), &lengths, vocab))
        .collect())
}

pub fn gen_copy(n: usize, lengths: RangeInclusive<usize>, vocab: usize, seed: u64) -> Result<Vec<Pair>> {
    gen_pairs(TaskKind::Copy, n, lengths, vocab, seed)
}

pub fn gen_reverse(n: usize, lengths: RangeInclusive<usize>, vocab: usize, seed: u64) -> Result<Vec<Pair>> {
    gen_pairs(TaskKind::Reverse, n, lengths, vocab, seed)
}

pub fn gen_dedup(n: usize, lengths: RangeInclusive<usize>, vocab: usize, seed: u64) -> Result<Vec<Pair>> {
    gen_pairs(TaskKind::Dedup, n, lengths, vocab, seed)
}

/// Train/valid/test splits with pairwise-distinct sources across all splits.
pub fn generate(
    kind: TaskKind,
    sizes: [usize; 3],
    lengths: RangeInclusive<usize>,
    vocab: usize,
    seed: u64,
) -> Result<ParallelCorpus> {
    check_args(&lengths, vocab)?;
    let total: usize = sizes.iter().sum();
    let mut seen = HashSet::with_capacity(total);
    let mut pairs = Vec::with_capacity(total);
    let max_attempts = total.saturating_mul(20).max(1000);
    let mut attempt = 0u64;
    while pairs.len() < total {
        if attempt as usize >= max_attempts {
            return Err(Error::Config(format!(
                "could not draw {total} distinct {kind:?} examples from vocab {vocab}, lengths {lengths:?}"
            )));
        }
        let mut rng = derive_rng(seed, &[kind as u64, attempt]);
        attempt += 1;
        let pair = example(kind, &mut rng, &lengths, vocab);
        if seen.insert(pair.source.clone()) {
            pairs.push(pair);
        }
    }
    let test = pairs.split_off(sizes[0] + sizes[1]);
    let valid = pairs.split_off(sizes[0]);
    Ok(ParallelCorpus { train: pairs, valid, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn copy_is_deterministic_and_identity() {
        let a = gen_copy(50, 4..=12, 20, 3).unwrap();
        let b = gen_copy(50, 4..=12, 20, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.source == p.target));
        assert_ne!(a, gen_copy(50, 4..=12, 20, 4).unwrap());
    }

    #[test]
    fn copy_length_histogram_is_uniform() {
        let n = 20_000;
        let pairs = gen_copy(n, 4..=12, 20, 11).unwrap();
        let k = 9;
        let mut counts = [0usize; 9];
        for p in &pairs {
            counts[p.source.len() - 4] += 1;
        }
        let expected = n as f64 / k as f64;
        let sigma = (n as f64 * (1.0 / k as f64) * (1.0 - 1.0 / k as f64)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn vocab_too_small() {
        assert!(gen_copy(1, 1..=2, 1, 0).is_err());
    }

    #[test]
    fn reverse_examples() {
        let pairs = gen_reverse(100, 1..=6, 3, 5).unwrap();
        for p in &pairs {
            let mut back = p.target.clone();
            back.reverse();
            assert_eq!(back, p.source);
            let mut oracle = Vec::new();
            for i in (0..p.source.len()).rev() {
                oracle.push(p.source[i].clone());
            }
            assert_eq!(p.target, oracle);
            let palindrome = p.source.iter().eq(p.source.iter().rev());
            assert_eq!(palindrome, p.source == p.target);
        }
    }

    #[test]
    fn dedup_examples() {
        assert_eq!(collapse_repeats(&toks("a a b b a")), toks("a b a"));
        assert_eq!(collapse_repeats(&toks("a b c")), toks("a b c"));
        let pairs = gen_dedup(200, 4..=12, 20, 8).unwrap();
        for p in &pairs {
            let mut oracle: Vec<String> = Vec::new();
            for (i, t) in p.source.iter().enumerate() {
                if i == 0 || p.source[i - 1] != *t {
                    oracle.push(t.clone());
                }
            }
            assert_eq!(p.target, oracle);
        }
        assert!(pairs.iter().any(|p| p.target.len() < p.source.len()));
    }

    #[test]
    fn splits_are_disjoint() {
        let c = generate(TaskKind::Copy, [300, 50, 50], 4..=12, 20, 1).unwrap();
        assert_eq!((c.train.len(), c.valid.len(), c.test.len()), (300, 50, 50));
        let train: HashSet<_> = c.train.iter().map(|p| &p.source).collect();
        assert!(c.valid.iter().chain(&c.test).all(|p| !train.contains(&p.source)));
        let valid: HashSet<_> = c.valid.iter().map(|p| &p.source).collect();
        assert!(c.test.iter().all(|p| !valid.contains(&p.source)));
    }

    #[test]
    fn generate_fails_when_space_is_exhausted() {
        // only 2 distinct sequences of length 1 exist
        assert!(generate(TaskKind::Copy, [3, 0, 0], 1..=1, 2, 0).is_err());
    }
}
