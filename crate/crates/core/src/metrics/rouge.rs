/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 between a hypothesis and a reference.
pub fn rouge_l<T: PartialEq>(hypothesis: &[T], reference: &[T]) -> f64 {
    if hypothesis.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(hypothesis, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / hypothesis.len() as f64;
    let recall = lcs / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Sentence-level ROUGE-L averaged over a corpus.
pub fn mean_rouge_l<T: PartialEq>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> f64 {
    if hypotheses.is_empty() {
        return 0.0;
    }
    let total: f64 = hypotheses.iter().zip(references).map(|(h, r)| rouge_l(h, r)).sum();
    total / hypotheses.len() as f64
}
