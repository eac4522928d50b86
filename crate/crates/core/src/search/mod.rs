//! Combinatorial optimizers over activation patterns.

mod chunked;
mod exact;
mod local;

pub use chunked::{chunked_fit, ChunkPlan};
pub use exact::{exact_erm, exact_region_count, DEFAULT_REGION_CAP};
pub use local::{gls, mgls, DEFAULT_ACTIVE_TOL};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arrangement::{canonical_key, pattern_of_weights, unit_groups, ActivationPattern, PatternFile};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{empirical_loss, Checkpoint, LossKind, ShallowReluNet};
use crate::rng::{self, Stream};
use crate::solver::alternate::{alternate_optimize, AlternateResult};
use crate::solver::region::{solve_region, RegionProblem, RegionSolution};

pub const RESULT_SCHEMA: &str = "relu-zono-result/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    LocalMin,
    MaxSteps,
    ExactComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub key: String,
    pub loss: f64,
    pub qp_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub steps: Vec<TraceStep>,
    pub terminal_reason: TerminalReason,
    /// Region solves over the whole run, including scans that found no move.
    pub total_qp_solves: usize,
}

impl SearchTrace {
    /// One JSON object per step.
    pub fn to_json_lines(&self) -> String {
        self.steps.iter().map(|s| serde_json::to_string(s).expect("plain data") + "\n").collect()
    }
}

/// Outcome of a search: the best network found and how it was reached.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub net: ShallowReluNet,
    /// Loss of `net` on the training set.
    pub loss: f64,
    pub pattern: ActivationPattern,
    pub trace: SearchTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResultFile {
    pub best_loss: f64,
    pub best_pattern: PatternFile,
    pub net_checkpoint: Checkpoint,
    pub trace: SearchTrace,
}

impl SearchResult {
    pub fn to_file(&self) -> SearchResultFile {
        SearchResultFile {
            best_loss: self.loss,
            best_pattern: self.pattern.to_file(),
            net_checkpoint: self.net.checkpoint(),
            trace: self.trace.clone(),
        }
    }
}

/// Settings shared by the pattern searches.
#[derive(Debug, Clone, Copy)]
pub struct SearchSpec<'a> {
    pub dataset: &'a Dataset,
    pub v: &'a [f64],
    pub loss: LossKind,
    pub fit_output_bias: bool,
}

impl SearchSpec<'_> {
    pub fn m(&self) -> usize {
        self.v.len()
    }

    fn region<'p>(&'p self, pattern: &'p ActivationPattern) -> RegionProblem<'p> {
        RegionProblem { pattern, dataset: self.dataset, v: self.v, loss: self.loss, fit_output_bias: self.fit_output_bias }
    }

    fn solve(&self, pattern: &ActivationPattern, witnesses: &[DVector<f64>]) -> Result<RegionSolution> {
        solve_region(&self.region(pattern), Some(witnesses))
    }

    fn finish(&self, pattern: ActivationPattern, sol: &RegionSolution, trace: SearchTrace) -> SearchResult {
        let net = sol.network(self.v, self.dataset.use_bias());
        let loss = empirical_loss(&net, self.dataset, self.loss);
        SearchResult { net, loss, pattern, trace }
    }

    fn check(&self) -> Result<()> {
        if self.v.is_empty() {
            return Err(Error::InvalidArgument("need at least one hidden unit".into()));
        }
        if self.dataset.n() == 0 {
            return Err(Error::InvalidDataset("empty dataset".into()));
        }
        Ok(())
    }
}

/// Standard normal `m x p` first-layer weights drawn from the init stream.
pub fn random_weights(dataset: &Dataset, m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, Stream::Init);
    DMatrix::from_row_iterator(m, dataset.p(), (0..m * dataset.p()).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Activation pattern of [`random_weights`]. Every row is feasible with the
/// sampled weights as witnesses.
pub fn random_vertex(dataset: &Dataset, m: usize, seed: u64) -> ActivationPattern {
    pattern_of_weights(&random_weights(dataset, m, seed), dataset)
}

/// Random vertex followed by alternating optimization of `(W)` and `(v, c)`.
pub fn random_vertex_fit(
    dataset: &Dataset,
    v0: &[f64],
    loss: LossKind,
    seed: u64,
    max_rounds: usize,
    tol: f64,
) -> Result<(SearchResult, AlternateResult)> {
    let pattern = random_vertex(dataset, v0.len(), seed);
    let alt = alternate_optimize(&pattern, dataset, v0, loss, max_rounds, tol)?;
    let groups = unit_groups(v0);
    let trace = SearchTrace {
        steps: alt
            .history
            .iter()
            .map(|&l| TraceStep { key: canonical_key(&pattern, &groups), loss: l, qp_solves: 1 })
            .collect(),
        terminal_reason: TerminalReason::LocalMin,
        total_qp_solves: alt.region_solves,
    };
    let result = SearchResult { net: alt.net.clone(), loss: alt.loss, pattern, trace };
    Ok((result, alt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrangement::row_feasible;
    use crate::data::gen_synthetic;
    use crate::network::pm_half;

    #[test]
    fn random_vertex_rows_are_feasible_and_reproducible() {
        let ds = gen_synthetic(3, 2, 5);
        let a = random_vertex(&ds, 6, 9);
        assert_eq!(a, random_vertex(&ds, 6, 9));
        assert_ne!(a, random_vertex(&ds, 6, 10));
        for row in a.rows() {
            assert!(row_feasible(row, &ds).unwrap().is_some());
        }
    }

    #[test]
    fn random_vertex_fit_reports_network_loss() {
        let ds = gen_synthetic(2, 2, 1);
        let (res, alt) = random_vertex_fit(&ds, &pm_half(4), LossKind::Mse, 3, 10, 1e-12).unwrap();
        assert_eq!(res.loss, alt.loss);
        assert!((empirical_loss(&res.net, &ds, LossKind::Mse) - res.loss).abs() < 1e-12);
        let json = serde_json::to_value(res.to_file()).unwrap();
        for key in ["best_loss", "best_pattern", "net_checkpoint", "trace"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
