use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-6;

/// Shannon entropy (natural log) of one attention distribution, with
/// `0 · log 0 = 0`.
pub fn attention_entropy(distribution: &[f64]) -> Result<f64> {
    attention_entropy_base(distribution, std::f64::consts::E)
}

pub fn attention_entropy_base(distribution: &[f64], base: f64) -> Result<f64> {
    if distribution.is_empty() {
        return Err(Error::Empty("attention distribution"));
    }
    let total: f64 = distribution.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL || distribution.iter().any(|p| *p < 0.0) {
        return Err(Error::Mismatch(format!(
            "attention distribution is not normalized (sum {total})"
        )));
    }
    let nats: f64 = distribution.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
    Ok(nats / base.ln())
}

/// Per-step entropies pooled over a set of decodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyStats {
    pub entropies: Vec<f64>,
    pub mean: f64,
    pub sorted: Vec<f64>,
}

/// Entropy of every distribution, their mean, and the sorted values the CDF
/// is read from.
pub fn entropy_report<'a, I>(distributions: I) -> Result<EntropyStats>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let entropies = distributions.into_iter().map(attention_entropy).collect::<Result<Vec<_>>>()?;
    if entropies.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    let mean = entropies.iter().sum::<f64>() / entropies.len() as f64;
    let mut sorted = entropies.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EntropyStats { entropies, mean, sorted })
}

impl EntropyStats {
    /// Proportion of entropies `<= x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }
}

/// `(value, cumulative fraction)` at each distinct entropy value.
pub fn cdf_table(stats: &EntropyStats) -> Vec<(f64, f64)> {
    let n = stats.sorted.len() as f64;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in stats.sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match rows.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => rows.push((v, frac)),
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(attention_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let uniform = attention_entropy(&[0.25; 4]).unwrap();
        assert!((uniform - 4f64.ln()).abs() < 1e-15);
        assert!((uniform - 1.3863).abs() < 1e-4);
        let h = attention_entropy(&[0.5, 0.25, 0.25]).unwrap();
        assert!((h - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!((h - 1.0397).abs() < 1e-4);
        let bits = attention_entropy_base(&[0.5, 0.25, 0.25], 2.0).unwrap();
        assert!((bits - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(attention_entropy(&[0.5, 0.4]).is_err());
        assert!(attention_entropy(&[1.5, -0.5]).is_err());
        assert!(attention_entropy(&[]).is_err());
    }

    #[test]
    fn report_examples() {
        let one_hot = [vec![1.0, 0.0], vec![0.0, 1.0]];
        let stats = entropy_report(one_hot.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(cdf_table(&stats), vec![(0.0, 1.0)]);

        let mixed = [vec![1.0, 0.0], vec![0.5, 0.5]];
        let stats = entropy_report(mixed.iter().map(Vec::as_slice)).unwrap();
        assert!((stats.mean - 2f64.ln() / 2.0).abs() < 1e-15);
        assert_eq!(stats.cdf_at(0.0), 0.5);
        assert_eq!(stats.cdf_at(1.0), 1.0);
        assert!(entropy_report(std::iter::empty()).is_err());
    }

    #[test]
    fn report_matches_recomputation() {
        use rand::Rng;
        let mut rng = crate::autodiff::seeded_rng(4);
        let dists: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let n = rng.gen_range(1..7);
                let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|v| v / z).collect()
            })
            .collect();
        let stats = entropy_report(dists.iter().map(Vec::as_slice)).unwrap();
        let mut total = 0.0;
        for (d, e) in dists.iter().zip(&stats.entropies) {
            let mut h = 0.0;
            for p in d {
                h -= p * p.ln();
            }
            assert!((h - e).abs() < 1e-12);
            total += h;
        }
        assert!((stats.mean - total / 10.0).abs() < 1e-12);
        let table = cdf_table(&stats);
        assert_eq!(table.last().unwrap().1, 1.0);
        assert!(table.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
    }

    proptest! {
        #[test]
        fn bounded_by_log_n_and_permutation_invariant(raw in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let z: f64 = raw.iter().sum();
            prop_assume!(z > 1e-3);
            let p: Vec<f64> = raw.iter().map(|v| v / z).collect();
            let h = attention_entropy(&p).unwrap();
            let n = p.len() as f64;
            prop_assert!(h >= 0.0 && h <= n.ln() + 1e-12);
            let mut q = p.clone();
            q.reverse();
            prop_assert!((attention_entropy(&q).unwrap() - h).abs() < 1e-12);
            let uniform = vec![1.0 / n; p.len()];
            prop_assert!(attention_entropy(&uniform).unwrap() >= h - 1e-12);
        }
    }
}
