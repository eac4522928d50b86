//! Block-coordinate descent over `(W)` and `(v, c)` inside one region.

use nalgebra::{DMatrix, DVector};

use super::barrier::{LogisticProblem, DEFAULT_BOUND};
use super::ipm::SparseRows;
use super::region::{solve_region, RegionProblem};
use super::simplex::{LinearProgram, RowSense, VarBound};
use crate::arrangement::{row_feasible, ActivationPattern};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{empirical_loss, LossKind, ShallowReluNet};

/// Output layer `(v, c)` fitted to fixed hidden features.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFit {
    pub v: DVector<f64>,
    pub c: f64,
}

/// Minimizes the loss of `features * v + c` over `(v, c)`. Squared loss
/// uses the minimum-norm least-squares solution.
pub fn fit_output_layer(features: &DMatrix<f64>, y: &[f64], loss: LossKind) -> Result<OutputFit> {
    let (n, m) = features.shape();
    let mut design = DMatrix::from_element(n, m + 1, 1.0);
    design.columns_mut(0, m).copy_from(features);
    let z = match loss {
        LossKind::Mse => {
            let svd = design.svd(true, true);
            let tol = 1e-12 * svd.singular_values.max();
            svd.solve(&DVector::from_column_slice(y), tol).map_err(|e| Error::InvalidArgument(e.to_string()))?
        }
        LossKind::L1 => {
            let mut lp = LinearProgram::new();
            let coef = lp.add_vars(m + 1, VarBound::Free, 0.0);
            let plus = lp.add_vars(n, VarBound::NonNeg, 1.0 / n as f64);
            let minus = lp.add_vars(n, VarBound::NonNeg, 1.0 / n as f64);
            for i in 0..n {
                let mut row: Vec<(usize, f64)> = coef.clone().map(|k| (k, design[(i, k)])).collect();
                row.push((plus.start + i, -1.0));
                row.push((minus.start + i, 1.0));
                lp.add_row(row, RowSense::Eq, y[i]);
            }
            DVector::from_column_slice(&lp.solve()?.x[coef])
        }
        LossKind::Logistic => {
            let g = SparseRows::new(m + 1);
            let prob = LogisticProblem { features: &design, labels: y, g: &g, bound: DEFAULT_BOUND };
            prob.solve(&DVector::zeros(m + 1))?.z
        }
    };
    Ok(OutputFit { v: z.rows(0, m).into_owned(), c: z[m] })
}

/// Hidden activations `relu(W xbar_i)` as an `n x m` matrix.
pub fn hidden_features(w: &DMatrix<f64>, dataset: &Dataset) -> DMatrix<f64> {
    DMatrix::from_fn(dataset.n(), w.nrows(), |i, j| {
        let x = dataset.xbar_col(i);
        (0..x.len()).map(|k| w[(j, k)] * x[k]).sum::<f64>().max(0.0)
    })
}

#[derive(Debug, Clone)]
pub struct AlternateResult {
    pub net: ShallowReluNet,
    pub loss: f64,
    /// Network loss after each completed round.
    pub history: Vec<f64>,
    pub region_solves: usize,
}

/// Alternates between the region problem in `W` (with `v` fixed and `c`
/// free) and a convex fit of `(v, c)` on the resulting hidden features.
/// Neither step is accepted if it raises the loss, and iteration stops once
/// a round gains less than `tol`.
pub fn alternate_optimize(
    pattern: &ActivationPattern,
    dataset: &Dataset,
    v0: &[f64],
    loss: LossKind,
    max_rounds: usize,
    tol: f64,
) -> Result<AlternateResult> {
    let witnesses: Vec<DVector<f64>> = pattern
        .rows()
        .map(|row| row_feasible(row, dataset)?.ok_or_else(|| Error::Infeasible("pattern row is not a chamber".into())))
        .collect::<Result<_>>()?;
    let mut v = v0.to_vec();
    let mut best: Option<(ShallowReluNet, f64)> = None;
    let mut history = Vec::new();
    let mut region_solves = 0;
    for _ in 0..max_rounds.max(1) {
        let problem = RegionProblem { pattern, dataset, v: &v, loss, fit_output_bias: true };
        let sol = solve_region(&problem, Some(&witnesses))?;
        region_solves += 1;
        let mut net = sol.network(&v, dataset.use_bias());
        let mut round_loss = empirical_loss(&net, dataset, loss);
        if let Some((_, prev)) = &best {
            if round_loss > *prev {
                break;
            }
        }
        let fit = fit_output_layer(&hidden_features(&sol.w, dataset), dataset.labels(), loss)?;
        let refit = ShallowReluNet::new(sol.w.clone(), fit.v.clone(), fit.c, dataset.use_bias())?;
        let refit_loss = empirical_loss(&refit, dataset, loss);
        if refit_loss <= round_loss {
            v = fit.v.iter().copied().collect();
            net = refit;
            round_loss = refit_loss;
        }
        history.push(round_loss);
        let gain = best.as_ref().map_or(f64::INFINITY, |(_, prev)| prev - round_loss);
        if best.as_ref().is_none_or(|(_, prev)| round_loss <= *prev) {
            best = Some((net, round_loss));
        }
        if gain < tol {
            break;
        }
    }
    let (net, loss) = best.expect("at least one round");
    Ok(AlternateResult { net, loss, history, region_solves })
}
