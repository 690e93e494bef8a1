use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{HoiPairRecord, Split};
use crate::error::{HoiError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitSummary {
    pub train: usize,
    pub test: usize,
    pub warnings: Vec<String>,
}

/// Assigns train/test labels by shuffling whole motion clips with a seeded RNG.
///
/// Clips are taken in shuffled order; a clip joins the training split while
/// that brings the training count closer to `fraction * n`.
pub fn split_dataset(
    mut records: Vec<HoiPairRecord>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<HoiPairRecord>, SplitSummary)> {
    if records.is_empty() {
        return Err(HoiError::Domain("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(HoiError::Domain(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        *groups.entry(r.sequence_id.as_str()).or_default() += 1;
    }
    let mut order: Vec<(&str, usize)> = groups.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let target = train_fraction * records.len() as f64;
    let mut train = 0usize;
    let mut labels: BTreeMap<String, Split> = BTreeMap::new();
    for (seq, size) in order {
        let with = (train + size) as f64 - target;
        let without = train as f64 - target;
        let split = if with.abs() <= without.abs() {
            train += size;
            Split::Train
        } else {
            Split::Test
        };
        labels.insert(seq.to_string(), split);
    }
    for r in &mut records {
        r.split = Some(labels[&r.sequence_id]);
    }
    let mut summary = SplitSummary {
        train,
        test: records.len() - train,
        warnings: Vec::new(),
    };
    for (name, count) in [("train", summary.train), ("test", summary.test)] {
        if count == 0 {
            let msg = format!("{name} split is empty");
            log::warn!("{msg}");
            summary.warnings.push(msg);
        }
    }
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::fixtures::record;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn corpus(scripts: usize, per: usize) -> Vec<HoiPairRecord> {
        let base = record("x", "x");
        (0..scripts * per)
            .map(|i| {
                let mut r = base.clone();
                r.id = format!("r{i}");
                r.sequence_id = format!("s{}", i / per);
                r
            })
            .collect()
    }

    fn leaks(records: &[HoiPairRecord]) -> bool {
        let mut by_seq: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
        for r in records {
            by_seq.entry(&r.sequence_id).or_default().insert(r.split.unwrap());
        }
        by_seq.values().any(|s| s.len() > 1)
    }

    #[test]
    fn seventy_thirty_at_script_granularity() {
        let (out, summary) = split_dataset(corpus(10, 10), 0.7, 3).unwrap();
        assert!(!leaks(&out));
        assert!((summary.train as i64 - 70).abs() <= 10, "{summary:?}");
        let train = out.iter().filter(|r| r.split == Some(Split::Train)).count();
        assert_eq!(train, summary.train);
    }

    #[test]
    fn same_seed_same_assignment() {
        let a = split_dataset(corpus(10, 7), 0.7, 11).unwrap().0;
        let b = split_dataset(corpus(10, 7), 0.7, 11).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn extreme_fraction_warns() {
        let (_, summary) = split_dataset(corpus(2, 5), 0.999, 0).unwrap();
        assert_eq!(summary.test, 0);
        assert_eq!(summary.warnings.len(), 1);
    }

    #[test]
    fn bad_inputs_are_domain_errors() {
        assert!(matches!(split_dataset(Vec::new(), 0.7, 0), Err(HoiError::Domain(_))));
        assert!(matches!(split_dataset(corpus(1, 1), 1.0, 0), Err(HoiError::Domain(_))));
        assert!(matches!(split_dataset(corpus(1, 1), 0.0, 0), Err(HoiError::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn split_never_leaks(sizes in prop::collection::vec(1usize..8, 1..20), seed in any::<u64>(), frac in 0.05f64..0.95) {
            let base = record("x", "x");
            let mut recs = Vec::new();
            for (s, n) in sizes.iter().enumerate() {
                for i in 0..*n {
                    let mut r = base.clone();
                    r.id = format!("{s}-{i}");
                    r.sequence_id = format!("s{s}");
                    recs.push(r);
                }
            }
            let total = recs.len();
            let max_group = *sizes.iter().max().unwrap() as f64;
            let (out, summary) = split_dataset(recs, frac, seed).unwrap();
            prop_assert!(!leaks(&out));
            prop_assert_eq!(summary.train + summary.test, total);
            prop_assert!((summary.train as f64 - frac * total as f64).abs() <= max_group);
        }
    }
}
