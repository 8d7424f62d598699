//! Train/test splits stratified by price decile.

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{GsneError, Result};
use crate::rng::SeededRng;

pub const STRATA: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split row indices `0..values.len()`. With `stratify`, rows are bucketed by
/// decile of `values` and each bucket is split separately; with fewer rows
/// than strata it falls back to a plain random split. Both halves are
/// returned in ascending order.
pub fn split(values: &[f64], train_fraction: f64, seed: u64, stratify: bool) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(GsneError::Input(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let n = values.len();
    let mut rng = SeededRng::new(seed, 11);
    let buckets: Vec<Vec<usize>> = if stratify && n >= STRATA {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut b = vec![Vec::new(); STRATA];
        for (rank, &i) in order.iter().enumerate() {
            b[rank * STRATA / n].push(i);
        }
        b
    } else {
        if stratify {
            warn!("only {n} rows, fewer than {STRATA} strata; using a plain random split");
        }
        vec![(0..n).collect()]
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut b in buckets {
        b.shuffle(&mut rng);
        let k = (train_fraction * b.len() as f64).round() as usize;
        train.extend_from_slice(&b[..k]);
        test.extend_from_slice(&b[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deciles_split_80_20() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let s = split(&values, 0.8, 1, true).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (800, 200));
        for d in 0..10 {
            let lo = d as f64 * 100.0;
            let in_decile = |i: &&usize| values[**i] >= lo && values[**i] < lo + 100.0;
            let k = s.train.iter().filter(in_decile).count();
            assert!((79..=81).contains(&k), "decile {d}: {k}");
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let values: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(split(&values, 0.8, 3, true).unwrap(), split(&values, 0.8, 3, true).unwrap());
        assert_ne!(split(&values, 0.8, 3, true).unwrap(), split(&values, 0.8, 4, true).unwrap());
    }

    #[test]
    fn bad_fraction() {
        assert!(split(&[1.0, 2.0], 1.0, 0, true).is_err());
        assert!(split(&[1.0, 2.0], 0.0, 0, true).is_err());
    }

    #[test]
    fn few_rows_fall_back() {
        let s = split(&[3.0, 1.0, 2.0, 5.0, 4.0], 0.6, 0, true).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (3, 2));
    }

    proptest! {
        #[test]
        fn disjoint_and_complete(n in 1usize..300, frac in 0.05f64..0.95, seed in 0u64..1000) {
            let values: Vec<f64> = (0..n).map(|i| ((i * 31) % 17) as f64).collect();
            let s = split(&values, frac, seed, true).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
