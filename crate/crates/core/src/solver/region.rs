//! The convex problem attached to one activation pattern.
//!
//! With the pattern `A` fixed, the network output on example `i` is linear
//! in the first-layer weights:
//!
//! ```text
//! yhat_i = sum_j v_j a_ji (W_j . xbar_i) + c
//! ```
//!
//! and staying inside the region means `(2 a_ji - 1) W_j . xbar_i >= 0`.
//! The unknowns are stacked as `z = (W_1, ..., W_m, c)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::barrier::{LogisticProblem, DEFAULT_BOUND};
use super::ipm::{solve_qp_polished, QuadraticProgram, SparseRows};
use super::simplex::{LinearProgram, RowSense, VarBound};
use crate::arrangement::ActivationPattern;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{LossKind, ShallowReluNet};

/// Feasibility tolerance on row-normalized sign constraints.
pub const TOL_FEAS: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct RegionProblem<'a> {
    pub pattern: &'a ActivationPattern,
    pub dataset: &'a Dataset,
    pub v: &'a [f64],
    pub loss: LossKind,
    pub fit_output_bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSolution {
    pub w: DMatrix<f64>,
    pub c: f64,
    pub loss: f64,
    pub max_constraint_violation: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Serialized form `{W, c, loss, kkt_residual, iterations}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSolutionFile {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub c: f64,
    pub loss: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl RegionSolution {
    pub fn to_file(&self) -> RegionSolutionFile {
        RegionSolutionFile {
            w: self.w.row_iter().map(|r| r.iter().copied().collect()).collect(),
            c: self.c,
            loss: self.loss,
            kkt_residual: self.kkt_residual,
            iterations: self.iterations,
        }
    }

    pub fn network(&self, v: &[f64], use_bias: bool) -> ShallowReluNet {
        ShallowReluNet::new(self.w.clone(), DVector::from_column_slice(v), self.c, use_bias)
            .expect("region solutions have consistent shapes")
    }
}

impl RegionProblem<'_> {
    pub fn m(&self) -> usize {
        self.pattern.m()
    }

    /// Number of stacked unknowns.
    pub fn num_vars(&self) -> usize {
        self.m() * self.dataset.p() + usize::from(self.fit_output_bias)
    }

    fn validate(&self) -> Result<()> {
        if self.pattern.n() != self.dataset.n() {
            return Err(Error::DimensionMismatch(format!(
                "pattern covers {} examples, dataset has {}",
                self.pattern.n(),
                self.dataset.n()
            )));
        }
        if self.v.len() != self.m() {
            return Err(Error::DimensionMismatch(format!("v has {} entries, pattern has {} units", self.v.len(), self.m())));
        }
        Ok(())
    }

    /// Design matrix `F` with `yhat = F z` inside the region.
    pub fn features(&self) -> DMatrix<f64> {
        let (n, p) = (self.dataset.n(), self.dataset.p());
        let mut f = DMatrix::zeros(n, self.num_vars());
        for i in 0..n {
            let x = self.dataset.xbar_col(i);
            for j in 0..self.m() {
                if self.pattern.get(j, i) && self.v[j] != 0.0 {
                    for k in 0..p {
                        f[(i, j * p + k)] = self.v[j] * x[k];
                    }
                }
            }
            if self.fit_output_bias {
                f[(i, self.m() * p)] = 1.0;
            }
        }
        f
    }

    /// Row-normalized sign constraints `G z >= 0`, one per (unit, example).
    pub fn constraints(&self) -> SparseRows {
        let (n, p) = (self.dataset.n(), self.dataset.p());
        let mut g = SparseRows::new(self.num_vars());
        for j in 0..self.m() {
            for i in 0..n {
                let x = self.dataset.xbar_col(i);
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                let s = if self.pattern.get(j, i) { 1.0 } else { -1.0 } / norm;
                g.push((0..p).filter(|&k| x[k] != 0.0).map(|k| (j * p + k, s * x[k])).collect());
            }
        }
        g
    }

    fn unstack(&self, z: &DVector<f64>) -> (DMatrix<f64>, f64) {
        let p = self.dataset.p();
        let w = DMatrix::from_fn(self.m(), p, |j, k| z[j * p + k]);
        let c = if self.fit_output_bias { z[self.m() * p] } else { 0.0 };
        (w, c)
    }

    /// Largest violation of the normalized sign constraints at `w`.
    pub fn violation(&self, w: &DMatrix<f64>) -> f64 {
        let p = self.dataset.p();
        let mut worst = 0.0f64;
        for i in 0..self.dataset.n() {
            let x = self.dataset.xbar_col(i);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            for j in 0..self.m() {
                let h: f64 = (0..p).map(|k| w[(j, k)] * x[k]).sum::<f64>() / norm;
                let signed = if self.pattern.get(j, i) { h } else { -h };
                worst = worst.max(-signed);
            }
        }
        worst
    }

    fn finish(&self, z: &DVector<f64>, kkt_residual: f64, iterations: usize) -> RegionSolution {
        let (w, c) = self.unstack(z);
        // The region objective, which matches the network loss wherever the
        // sign constraints hold.
        let loss = region_loss(self, z);
        RegionSolution { max_constraint_violation: self.violation(&w), w, c, loss, kkt_residual, iterations }
    }

    fn start_point(&self, witnesses: Option<&[DVector<f64>]>) -> DVector<f64> {
        let p = self.dataset.p();
        let mut z = DVector::zeros(self.num_vars());
        if let Some(ws) = witnesses {
            for (j, w) in ws.iter().enumerate().take(self.m()) {
                let norm = w.norm();
                if norm > 0.0 {
                    for k in 0..p {
                        z[j * p + k] = w[k] / norm;
                    }
                }
            }
        }
        z
    }
}

fn region_loss(problem: &RegionProblem<'_>, z: &DVector<f64>) -> f64 {
    let yhat = problem.features() * z;
    let y = problem.dataset.labels();
    yhat.iter().zip(y).map(|(a, b)| problem.loss.eval(*a, *b)).sum::<f64>() / y.len() as f64
}

/// Solves the region problem. `witnesses`, one strictly feasible weight
/// vector per unit, seed the interior methods; they are required for the
/// logistic loss, whose barrier method needs a strictly feasible start.
pub fn solve_region(problem: &RegionProblem<'_>, witnesses: Option<&[DVector<f64>]>) -> Result<RegionSolution> {
    problem.validate()?;
    let f = problem.features();
    let g = problem.constraints();
    let y = DVector::from_column_slice(problem.dataset.labels());
    let n = problem.dataset.n() as f64;
    match problem.loss {
        LossKind::Mse => {
            let qp = QuadraticProgram {
                hess: (2.0 / n) * f.tr_mul(&f),
                lin: (-2.0 / n) * f.tr_mul(&y),
                h: DVector::zeros(g.nrows()),
                g,
            };
            let start = problem.start_point(witnesses);
            let sol = solve_qp_polished(&qp, Some(&start))?;
            Ok(problem.finish(&sol.z, sol.kkt_residual, sol.iterations))
        }
        LossKind::L1 => solve_l1(problem, &f, &g),
        LossKind::Logistic => {
            let ws = witnesses.ok_or_else(|| Error::InvalidArgument("logistic regions need witnesses".into()))?;
            let mut start = problem.start_point(Some(ws));
            // Unit-norm witnesses have margin >= 1/||w|| on every normalized
            // constraint; any positive scaling keeps that strict.
            if start.amax() >= DEFAULT_BOUND {
                start *= 0.5 * DEFAULT_BOUND / start.amax();
            }
            let prob = LogisticProblem { features: &f, labels: problem.dataset.labels(), g: &g, bound: DEFAULT_BOUND };
            let sol = prob.solve(&start)?;
            Ok(problem.finish(&sol.z, sol.gap, sol.iterations))
        }
    }
}

fn solve_l1(problem: &RegionProblem<'_>, f: &DMatrix<f64>, g: &SparseRows) -> Result<RegionSolution> {
    let (nv, n) = (problem.num_vars(), problem.dataset.n());
    let y = problem.dataset.labels();
    let mut lp = LinearProgram::new();
    let z = lp.add_vars(nv, VarBound::Free, 0.0);
    let plus = lp.add_vars(n, VarBound::NonNeg, 1.0 / n as f64);
    let minus = lp.add_vars(n, VarBound::NonNeg, 1.0 / n as f64);
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = z.clone().filter(|&k| f[(i, k)] != 0.0).map(|k| (k, f[(i, k)])).collect();
        row.push((plus.start + i, -1.0));
        row.push((minus.start + i, 1.0));
        lp.add_row(row, RowSense::Eq, y[i]);
    }
    for r in 0..g.nrows() {
        lp.add_row(g.row(r).to_vec(), RowSense::Ge, 0.0);
    }
    let sol = lp.solve().map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("region constraints: {msg}")),
        other => other,
    })?;
    let zs = DVector::from_column_slice(&sol.x[z]);
    Ok(problem.finish(&zs, (-sol.min_reduced_cost).max(0.0), sol.iterations))
}
