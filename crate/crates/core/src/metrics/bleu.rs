use std::collections::HashMap;

use crate::error::{Error, Result};

fn ngram_counts<T: Eq + std::hash::Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU with one reference per hypothesis: geometric mean of
/// clipped n-gram precisions (pooled over the corpus) times the brevity
/// penalty. No smoothing, so any order with zero matches gives 0.
pub fn corpus_bleu<T: Eq + std::hash::Hash>(
    hypotheses: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Mismatch(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (gram, count) in &hc {
                matches[n - 1] += (*count).min(rc.get(gram).copied().unwrap_or(0));
            }
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        if matches[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matches[n] as f64 / totals[n] as f64).ln();
    }
    let brevity = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok(brevity * (log_sum / max_n as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_one() {
        let h = vec![toks("a b c d e"), toks("f g h i")];
        assert_eq!(corpus_bleu(&h, &h, 4).unwrap(), 1.0);
    }

    #[test]
    fn no_four_gram_match_is_zero() {
        let h = vec![toks("a b c d")];
        let r = vec![toks("a b c e")];
        assert_eq!(corpus_bleu(&h, &r, 4).unwrap(), 0.0);
    }

    #[test]
    fn two_sentence_hand_count() {
        let h = vec![toks("the cat is on the red mat"), toks("a dog runs")];
        let r = vec![toks("the cat is on the mat"), toks("a dog runs fast")];
        // clipped matches / totals per order, counted by hand:
        // 1: 6/7 + 3/3, 2: 4/6 + 2/2, 3: 3/5 + 1/1, 4: 2/4 + 0/0
        let p: [f64; 4] = [9.0 / 10.0, 6.0 / 8.0, 4.0 / 6.0, 2.0 / 4.0];
        // hypothesis length 10 equals reference length 10: no brevity penalty
        let expected = (p.iter().map(|v| v.ln()).sum::<f64>() / 4.0).exp();
        assert!((corpus_bleu(&h, &r, 4).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty() {
        let h = vec![toks("the cat")];
        let r = vec![toks("the cat sat")];
        let expected = (1.0f64 - 3.0 / 2.0).exp();
        assert!((corpus_bleu(&h, &r, 2).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn order_invariant() {
        let h = vec![toks("the cat is on the red mat"), toks("a dog runs")];
        let r = vec![toks("the cat is on the mat"), toks("a dog runs fast")];
        let hr: Vec<_> = h.iter().rev().cloned().collect();
        let rr: Vec<_> = r.iter().rev().cloned().collect();
        assert_eq!(corpus_bleu(&h, &r, 4).unwrap(), corpus_bleu(&hr, &rr, 4).unwrap());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(corpus_bleu::<&str>(&[], &[], 4).is_err());
    }
}
