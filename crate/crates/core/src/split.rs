//! Deterministic train/validation sampling across several manifests.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;
use crate::rng::Rng;

/// `(manifest index, sample index)`.
pub type SampleRef = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Split {
    pub train: Vec<SampleRef>,
    pub val: Vec<SampleRef>,
    pub seed: u64,
}

/// Draws `n_train + n_val` distinct samples from every manifest.
///
/// Manifest `m` uses stream `m` of `seed`, so its draw does not depend on the
/// other manifests. The draw is a partial Fisher-Yates shuffle: the first
/// `n_train` picks are train and the rest validation, and growing `n_val`
/// never changes the train picks.
pub fn sample_split(
    manifests: &[DatasetManifest],
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> Result<Split> {
    let need = n_train + n_val;
    let mut train = Vec::with_capacity(n_train * manifests.len());
    let mut val = Vec::with_capacity(n_val * manifests.len());
    for (m, manifest) in manifests.iter().enumerate() {
        if manifest.len() < need {
            return Err(Error::InsufficientSamples {
                manifest: manifest.name.clone(),
                needed: need,
                available: manifest.len(),
            });
        }
        let picks = draw_without_replacement(manifest.len(), need, &mut Rng::new(seed, m as u64));
        train.extend(picks[..n_train].iter().map(|&s| (m, s)));
        val.extend(picks[n_train..].iter().map(|&s| (m, s)));
    }
    Ok(Split { train, val, seed })
}

pub(crate) fn draw_without_replacement(n: usize, m: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.partial_shuffle(&mut idx, m);
    idx.truncate(m);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Sample;
    use proptest::prelude::*;
    use crate::rng::Rng;
    use std::collections::HashSet;

    fn pool(name: &str, n: usize) -> DatasetManifest {
        DatasetManifest::new(
            name,
            (0..n).map(|i| Sample::new(format!("{name}{i}"), "x.png")).collect(),
        )
        .unwrap()
    }

    /// Textbook Fisher-Yates over the whole index array.
    fn fisher_yates_oracle(n: usize, seed: u64, stream: u64) -> Vec<usize> {
        let mut rng = Rng::new(seed, stream);
        let mut a: Vec<usize> = (0..n).collect();
        for i in 0..n.saturating_sub(1) {
            let j = i + rng.below(n - i);
            a.swap(i, j);
        }
        a
    }

    #[test]
    fn exhaustive_draw_is_permutation() {
        let s = sample_split(&[pool("a", 5)], 5, 0, 3).unwrap();
        let mut got: Vec<usize> = s.train.iter().map(|r| r.1).collect();
        got.sort_unstable();
        assert_eq!(got, [0, 1, 2, 3, 4]);
        assert!(s.val.is_empty());
    }

    #[test]
    fn deterministic() {
        let ms = [pool("a", 30), pool("b", 40)];
        assert_eq!(
            sample_split(&ms, 10, 5, 11).unwrap(),
            sample_split(&ms, 10, 5, 11).unwrap()
        );
    }

    #[test]
    fn matches_fisher_yates_oracle() {
        let s = sample_split(&[pool("a", 100)], 10, 5, 7).unwrap();
        let oracle = fisher_yates_oracle(100, 7, 0);
        let got: Vec<usize> = s.train.iter().chain(&s.val).map(|r| r.1).collect();
        assert_eq!(got, oracle[..15]);
    }

    #[test]
    fn insufficient_names_manifest() {
        let err = sample_split(&[pool("big", 20), pool("small", 4)], 3, 2, 0).unwrap_err();
        match err {
            Error::InsufficientSamples { manifest, needed, available } => {
                assert_eq!((manifest.as_str(), needed, available), ("small", 5, 4));
            }
            e => panic!("unexpected {e}"),
        }
    }

    proptest! {
        #[test]
        fn disjoint_and_balanced(n in 1usize..60, a in 0usize..30, b in 0usize..30, seed: u64) {
            prop_assume!(a + b <= n);
            let ms = [pool("x", n), pool("y", n + 3)];
            let s = sample_split(&ms, a, b, seed).unwrap();
            prop_assert_eq!(s.train.len(), 2 * a);
            prop_assert_eq!(s.val.len(), 2 * b);
            let all: HashSet<_> = s.train.iter().chain(&s.val).collect();
            prop_assert_eq!(all.len(), 2 * (a + b));
        }

        #[test]
        fn growing_val_keeps_train(n in 2usize..60, a in 0usize..30, seed: u64) {
            prop_assume!(a < n);
            let ms = [pool("x", n)];
            let b = (n - a).saturating_sub(1);
            let s0 = sample_split(&ms, a, b, seed).unwrap();
            let s1 = sample_split(&ms, a, b + 1, seed).unwrap();
            prop_assert_eq!(s0.train, s1.train);
            prop_assert_eq!(&s0.val[..], &s1.val[..b]);
        }
    }
}
