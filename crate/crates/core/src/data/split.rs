use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Random sequence-level split; returns `(train, test)` with
/// `round(fraction · n)` test sequences (clamped to `1..n−1`).
pub fn holdout_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameters(format!(
            "hold-out fraction {fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall(format!(
            "{n} sequences cannot be split"
        )));
    }
    let n_test = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let order = shuffled(n, seed);
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((dataset.subset(&train_idx), dataset.subset(&test_idx)))
}

/// `k` disjoint validation folds covering the dataset; the first `n mod k`
/// folds get one extra sequence. Returns `(train, val)` per fold.
pub fn kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let n = dataset.len();
    if k < 2 {
        return Err(Error::InvalidParameters(format!(
            "k-fold needs k >= 2, got {k}"
        )));
    }
    if k > n {
        return Err(Error::KTooLarge { k, available: n });
    }
    let order = shuffled(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut val: Vec<usize> = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        val.sort_unstable();
        train.sort_unstable();
        folds.push((dataset.subset(&train), dataset.subset(&val)));
        start += size;
    }
    Ok(folds)
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    order
}
