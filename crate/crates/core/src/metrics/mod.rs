//! Generation-quality metrics and attention analysis.

mod bleu;
mod entropy;
mod export;
mod rouge;

pub use bleu::corpus_bleu;
pub use entropy::{
    attention_entropy, attention_entropy_base, cdf_table, entropy_report, EntropyStats,
};
pub use export::{
    export_heatmap, read_cdf_csv, read_heatmap_csv, write_cdf_csv, Heatmap, MetricsSummary,
};
pub use rouge::{lcs_len, mean_rouge_l, rouge_l};

use crate::error::{Error, Result};

/// Fraction of positions whose token equals one of the two tokens before it.
pub fn repetition_rate<T: PartialEq>(tokens: &[T]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Empty("token sequence"));
    }
    let repeats = (0..tokens.len())
        .filter(|&i| tokens[i.saturating_sub(2)..i].contains(&tokens[i]))
        .count();
    Ok(repeats as f64 / tokens.len() as f64)
}

/// Position-wise accuracy against references terminated by an end marker:
/// each reference contributes `len + 1` positions, the last being the
/// end-of-sequence decision.
pub fn token_accuracy<T: PartialEq>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::Mismatch(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        for i in 0..=r.len() {
            total += 1;
            // past the hypothesis' own end marker nothing can match
            let ok = match (i.cmp(&h.len()), r.get(i)) {
                (std::cmp::Ordering::Less, Some(b)) => h[i] == *b,
                (std::cmp::Ordering::Equal, None) => true,
                _ => false,
            };
            correct += ok as usize;
        }
    }
    if total == 0 {
        return Err(Error::Empty("reference corpus"));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn repetition_examples() {
        assert_eq!(repetition_rate(&["a", "b", "c", "d"]).unwrap(), 0.0);
        assert_eq!(repetition_rate(&["a", "a", "a", "a"]).unwrap(), 0.75);
        assert_eq!(repetition_rate(&["a", "b", "a", "c", "d", "a"]).unwrap(), 1.0 / 6.0);
        assert!(repetition_rate::<u8>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn repetition_matches_scan(tokens in prop::collection::vec(0u8..4, 1..30)) {
            let mut hits = 0;
            for i in 0..tokens.len() {
                let mut hit = false;
                for back in 1..=2 {
                    if i >= back && tokens[i - back] == tokens[i] {
                        hit = true;
                    }
                }
                hits += hit as usize;
            }
            prop_assert_eq!(repetition_rate(&tokens).unwrap(), hits as f64 / tokens.len() as f64);
        }
    }

    #[test]
    fn token_accuracy_counts_end_position() {
        let refs = vec![vec![1, 2, 3]];
        assert_eq!(token_accuracy(&[vec![1, 2, 3]], &refs).unwrap(), 1.0);
        assert_eq!(token_accuracy(&[vec![1, 2, 3, 4]], &refs).unwrap(), 0.75);
        assert_eq!(token_accuracy(&[vec![1, 9]], &refs).unwrap(), 0.25);
        assert!(token_accuracy(&[vec![1]], &[]).is_err());
    }
}
