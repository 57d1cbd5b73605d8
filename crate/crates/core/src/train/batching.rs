use rand::seq::SliceRandom;

use crate::autodiff::derive_rng;

const SHUFFLE_STREAM: u64 = 2;

/// Group example indices into batches whose summed source tokens and summed
/// target tokens each stay within `budget`. Examples are sorted by length
/// first so batches hold similar lengths; an example longer than the budget
/// gets a batch of its own.
pub fn make_batches(lengths: &[(usize, usize)], budget: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (lengths[i].0, lengths[i].1, i));
    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let (mut src, mut tgt) = (0, 0);
    for i in order {
        let (s, t) = lengths[i];
        if !current.is_empty() && (src + s > budget || tgt + t > budget) {
            batches.push(std::mem::take(&mut current));
            src = 0;
            tgt = 0;
        }
        current.push(i);
        src += s;
        tgt += t;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Batch visiting order for `epoch`, a pure function of `(seed, epoch)`.
pub fn epoch_order(n_batches: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_batches).collect();
    let mut rng = derive_rng(seed, &[SHUFFLE_STREAM, epoch as u64]);
    order.shuffle(&mut rng);
    order
}
