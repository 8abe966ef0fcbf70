use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};
use crate::augment::quota;

/// Stratified split: each class with m samples sends `floor(m × train_fraction)`
/// of them, chosen by a seeded shuffle, to the first half. When those floors
/// fall short of `floor(n × train_fraction)` overall, the shortfall goes one
/// sample each to the classes with the largest fractional remainders (ties
/// to the lower class index). Both halves keep the original sample order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes.len()];
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.label as usize].push(i);
    }
    if let Some(k) = by_class.iter().position(Vec::is_empty) {
        return Err(DataError::EmptyClass(ds.classes[k]));
    }

    let mut n_train: Vec<usize> = by_class.iter().map(|m| quota(m.len(), train_fraction)).collect();
    let shortfall = quota(ds.len(), train_fraction).saturating_sub(n_train.iter().sum());
    let mut by_remainder: Vec<(usize, f64)> = by_class
        .iter()
        .enumerate()
        .map(|(k, m)| (k, m.len() as f64 * train_fraction - n_train[k] as f64))
        .collect();
    by_remainder.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(k, _) in by_remainder.iter().take(shortfall) {
        n_train[k] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_train = vec![false; ds.len()];
    for (members, &n_train) in by_class.iter_mut().zip(&n_train) {
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            to_train[i] = true;
        }
    }

    let half = |want: bool| Dataset {
        samples: ds
            .samples
            .iter()
            .zip(&to_train)
            .filter(|(_, &t)| t == want)
            .map(|(s, _)| s.clone())
            .collect(),
        classes: ds.classes.clone(),
        manifest: ds.manifest.clone(),
    };
    Ok((half(true), half(false)))
}
