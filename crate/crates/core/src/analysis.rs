//! Perturbation experiments on the chamber structure of a dataset.

use serde::{Deserialize, Serialize};

use crate::arrangement::{enumerate_chambers, DEFAULT_CHAMBER_CAP};
use crate::data::{perturb, Dataset, PerturbationSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub trials: usize,
    /// Trials whose perturbed dataset has exactly the original chambers.
    pub identical: usize,
    pub chambers: usize,
}

impl StabilityReport {
    pub fn all_identical(&self) -> bool {
        self.identical == self.trials
    }
}

/// Compares the chambers of `dataset` with those of `trials` perturbed
/// copies, using seeds `seed, seed + 1, ...`.
pub fn chamber_stability(dataset: &Dataset, epsilon: f64, trials: usize, seed: u64) -> Result<StabilityReport> {
    let base = enumerate_chambers(dataset, DEFAULT_CHAMBER_CAP)?;
    let mut identical = 0;
    for t in 0..trials as u64 {
        let moved = perturb(dataset, &PerturbationSpec::new(epsilon, seed.wrapping_add(t))?);
        if enumerate_chambers(&moved, DEFAULT_CHAMBER_CAP)?.patterns == base.patterns {
            identical += 1;
        }
    }
    Ok(StabilityReport { epsilon, trials, identical, chambers: base.len() })
}

/// Largest `epsilon` of the form `0.1 * scale / 4^k`, `k <= 10`, at which
/// every trial keeps the chamber set, where `scale` is the largest
/// coordinate magnitude. Below that range the new chambers of degenerate
/// data are too thin to resolve in floating point.
pub fn find_stable_epsilon(dataset: &Dataset, trials: usize, seed: u64) -> Result<StabilityReport> {
    let scale = dataset.rows().flatten().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-12);
    let mut epsilon = 0.1 * scale;
    for _ in 0..=10 {
        let report = chamber_stability(dataset, epsilon, trials, seed)?;
        if report.all_identical() {
            return Ok(report);
        }
        epsilon /= 4.0;
    }
    Err(Error::NotGeneralPosition(format!("chambers still change at epsilon = {:e}", epsilon * 4.0)))
}
