use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{CandidatePair, DatasetBundle, SplitTag};
use crate::error::{Error, Result};

/// Sizes of a 3:1:1 split of `k` items: floor(3k/5), floor(k/5), remainder.
pub fn split_sizes(k: usize) -> (usize, usize, usize) {
    let train = 3 * k / 5;
    let valid = k / 5;
    (train, valid, k - train - valid)
}

/// Stratified, seeded 3:1:1 train/valid/test split.
///
/// Positives and negatives are shuffled separately and dealt to the three
/// splits in proportion to the split sizes, so each split's positive rate
/// tracks the whole.
pub fn split_dataset(
    bundle: &DatasetBundle,
    seed: u64,
) -> Result<(DatasetBundle, DatasetBundle, DatasetBundle)> {
    let k = bundle.len();
    if k < 5 {
        return Err(Error::Split(format!("need at least 5 pairs to split, got {k}")));
    }
    let labels = bundle.labels().map_err(|e| Error::Split(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pos: Vec<usize> = (0..k).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..k).filter(|&i| labels[i] == 0).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let sizes = split_sizes(k);
    let p = pos.len();
    let share = |size: usize| ((p * size) as f64 / k as f64).round() as usize;
    let mut pos_counts = [share(sizes.0), share(sizes.1), 0];
    pos_counts[0] = pos_counts[0].min(sizes.0);
    pos_counts[1] = pos_counts[1].min(sizes.1).min(p - pos_counts[0]);
    pos_counts[2] = p - pos_counts[0] - pos_counts[1];
    // The test split may be too small for the leftover positives; push the
    // excess back to the larger splits.
    let size_arr = [sizes.0, sizes.1, sizes.2];
    while pos_counts[2] > size_arr[2] {
        let slot = if pos_counts[0] < size_arr[0] { 0 } else { 1 };
        pos_counts[slot] += 1;
        pos_counts[2] -= 1;
    }

    let mut pos_it = pos.into_iter();
    let mut neg_it = neg.into_iter();
    let tags = [SplitTag::Train, SplitTag::Valid, SplitTag::Test];
    let mut out: Vec<DatasetBundle> = Vec::with_capacity(3);
    for s in 0..3 {
        let mut idx: Vec<usize> = pos_it.by_ref().take(pos_counts[s]).collect();
        idx.extend(neg_it.by_ref().take(size_arr[s] - pos_counts[s]));
        idx.shuffle(&mut rng);
        let pairs: Vec<CandidatePair> = idx.iter().map(|&i| bundle.pairs[i].clone()).collect();
        out.push(DatasetBundle::new(bundle.name.clone(), tags[s], pairs));
    }
    let test = out.pop().unwrap();
    let valid = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok((train, valid, test))
}
