use itertools::Itertools;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::seq::index;
use serde::Serialize;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubsetMode {
    /// Check every subset; refuse when there are more than `cap`.
    Exhaustive,
    /// Check `samples` random subsets. A `true` answer is then probabilistic.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralPositionOptions {
    /// Relative singular value threshold.
    pub tol: f64,
    pub cap: u128,
    pub mode: SubsetMode,
}

impl Default for GeneralPositionOptions {
    fn default() -> Self {
        Self { tol: 1e-9, cap: 1_000_000, mode: SubsetMode::Exhaustive }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralPositionReport {
    pub general: bool,
    pub probabilistic: bool,
    pub subsets_checked: u64,
    pub exact_rechecks: u64,
    /// First dependent subset found, if any.
    pub dependent_subset: Option<Vec<usize>>,
}

/// Decides whether every `min(n, p)` homogenized examples are linearly
/// independent. Without a bias this is general linear position of the raw
/// examples; with a bias it is general affine position.
pub fn is_general_position(dataset: &Dataset, opts: &GeneralPositionOptions) -> Result<GeneralPositionReport> {
    let xbar = dataset.xbar();
    let n = dataset.n();
    let k = n.min(dataset.p());
    let total = binomial(n as u128, k as u128);
    let sigma_max = xbar.clone().singular_values().max();
    let mut report = GeneralPositionReport {
        general: true,
        probabilistic: false,
        subsets_checked: 0,
        exact_rechecks: 0,
        dependent_subset: None,
    };
    if sigma_max == 0.0 {
        report.general = false;
        report.dependent_subset = Some((0..k).collect());
        return Ok(report);
    }
    let check = |subset: &[usize], report: &mut GeneralPositionReport| -> bool {
        report.subsets_checked += 1;
        let sub = xbar.select_columns(subset);
        let sigma_min = sub.clone().singular_values().min();
        let threshold = opts.tol * sigma_max;
        let independent = if sigma_min > 10.0 * threshold {
            true
        } else if sigma_min >= threshold / 10.0 {
            report.exact_rechecks += 1;
            exact_rank(&sub) == subset.len()
        } else {
            false
        };
        if !independent {
            report.general = false;
            report.dependent_subset = Some(subset.to_vec());
        }
        independent
    };
    match opts.mode {
        SubsetMode::Exhaustive => {
            if total > opts.cap {
                return Err(Error::ComplexityRefused { what: "general position check", required: total, cap: opts.cap });
            }
            for subset in (0..n).combinations(k) {
                if !check(&subset, &mut report) {
                    break;
                }
            }
        }
        SubsetMode::Sampled { samples, seed } => {
            report.probabilistic = true;
            let mut rng = rng::stream(seed, Stream::Data);
            for _ in 0..samples {
                let mut subset = index::sample(&mut rng, n, k).into_vec();
                subset.sort_unstable();
                if !check(&subset, &mut report) {
                    break;
                }
            }
        }
    }
    Ok(report)
}

pub(crate) fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Rank of a floating matrix computed in exact rational arithmetic.
fn exact_rank(m: &DMatrix<f64>) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<BigRational>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| BigRational::from_float(m[(r, c)]).unwrap_or_else(|| BigRational::from_integer(BigInt::zero())))
                .collect()
        })
        .collect();
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, pivot);
        for r in rank + 1..rows {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &a[rank][col];
            for c in col..cols {
                let delta = &factor * &a[rank][c];
                a[r][c] -= delta;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_appendix_d1, gen_synthetic};

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn first_degenerate_example_is_degenerate() {
        let ds = gen_appendix_d1(0.0).unwrap();
        let r = is_general_position(&ds, &GeneralPositionOptions::default()).unwrap();
        assert!(!r.general);
    }

    #[test]
    fn few_independent_columns_are_general() {
        let ds = Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0], true).unwrap();
        assert!(is_general_position(&ds, &GeneralPositionOptions::default()).unwrap().general);
    }

    #[test]
    fn synthetic_data_is_general() {
        for seed in 0..5 {
            let ds = gen_synthetic(4, 2, seed);
            let r = is_general_position(&ds, &GeneralPositionOptions::default()).unwrap();
            assert!(r.general, "seed {seed}");
            assert_eq!(r.subsets_checked, 252);
        }
    }

    #[test]
    fn exact_rank_matches_construction() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.1, 0.2, 0.7]);
        assert_eq!(exact_rank(&m), 2);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(exact_rank(&id), 3);
    }

    #[test]
    fn borderline_subset_goes_through_exact_check() {
        // Third point off the line by a relative amount near the tolerance.
        let ds = Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 3e-9]], vec![0.0; 3], true).unwrap();
        let r = is_general_position(&ds, &GeneralPositionOptions::default()).unwrap();
        assert_eq!(r.exact_rechecks, 1);
        assert!(r.general);
    }

    #[test]
    fn exhaustive_refuses_above_cap() {
        let ds = gen_synthetic(4, 2, 0);
        let opts = GeneralPositionOptions { cap: 100, ..Default::default() };
        assert!(matches!(is_general_position(&ds, &opts), Err(Error::ComplexityRefused { .. })));
        let sampled = GeneralPositionOptions { cap: 100, mode: SubsetMode::Sampled { samples: 50, seed: 1 }, ..Default::default() };
        let r = is_general_position(&ds, &sampled).unwrap();
        assert!(r.general && r.probabilistic);
    }
}
