//! Log-barrier method for the logistic objective
//!
//! ```text
//! minimize (1/N) sum_i softplus(f_i^T z) - y_i f_i^T z
//! subject to G z >= 0, |z_k| <= R
//! ```
//!
//! The box keeps the feasible set compact; without it a separable region
//! has no minimizer. A box rather than a ball: iterates pressed against a
//! flat face can still slide along it, while on a sphere Newton steps shrink
//! to the square root of the remaining slack. Each barrier stage runs damped
//! Newton to centrality.

use nalgebra::{DMatrix, DVector};

use super::ipm::SparseRows;
use crate::error::{Error, Result};
use crate::network::{sigmoid, softplus};

pub const DEFAULT_BOUND: f64 = 1e4;
const GAP_TOL: f64 = 1e-9;
/// Every successful solve reports a gap of at least this: stages multiply
/// `t` by ten and stop at the first gap below `GAP_TOL`, and the first
/// stage starts with a gap of at least ten times `GAP_TOL`.
pub const MIN_REPORTED_GAP: f64 = GAP_TOL / 10.0;
/// Newton steps allowed per centering stage.
const MAX_NEWTON: usize = 200;
const CENTERING_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Upper bound on the suboptimality, `(constraints + 2 n) / t`.
    pub gap: f64,
    pub iterations: usize,
}

pub struct LogisticProblem<'a> {
    pub features: &'a DMatrix<f64>,
    pub labels: &'a [f64],
    pub g: &'a SparseRows,
    /// Half-width of the box.
    pub bound: f64,
}

impl LogisticProblem<'_> {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        let yhat = self.features * z;
        let n = self.labels.len() as f64;
        yhat.iter().zip(self.labels).map(|(s, y)| softplus(*s) - y * s).sum::<f64>() / n
    }

    fn derivatives(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let yhat = self.features * z;
        let n = self.labels.len() as f64;
        let resid = DVector::from_iterator(yhat.len(), yhat.iter().zip(self.labels).map(|(s, y)| (sigmoid(*s) - y) / n));
        let curv = yhat.map(|s| {
            let p = sigmoid(s);
            p * (1.0 - p) / n
        });
        let grad = self.features.tr_mul(&resid);
        let mut weighted = self.features.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= curv[i];
        }
        (grad, self.features.tr_mul(&weighted))
    }

    /// Constraint slacks and the box slacks `R - z`, `R + z`.
    fn slacks(&self, z: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let s = self.g.mul(z);
        let upper = z.map(|v| self.bound - v);
        let lower = z.map(|v| self.bound + v);
        let interior = s.iter().chain(upper.iter()).chain(lower.iter()).all(|v| *v > 0.0);
        interior.then_some((s, upper, lower))
    }

    fn barrier_value(&self, z: &DVector<f64>, t: f64) -> Option<f64> {
        let (s, upper, lower) = self.slacks(z)?;
        let logs: f64 = s.iter().chain(upper.iter()).chain(lower.iter()).map(|v| v.ln()).sum();
        Some(t * self.objective(z) - logs)
    }

    /// Minimizes from a strictly feasible `start`.
    pub fn solve(&self, start: &DVector<f64>) -> Result<BarrierSolution> {
        let n = start.len();
        let mc = (self.g.nrows() + 2 * n) as f64;
        let mut z = start.clone();
        if self.slacks(&z).is_none() {
            return Err(Error::Infeasible("barrier start is not strictly feasible".into()));
        }
        // The loss is nonnegative, so its value at the start bounds the
        // suboptimality; starting with a matching gap avoids early stages
        // that only push the iterate out to the box.
        let mut t = (mc / self.objective(&z).max(1e-300)).clamp(1.0, 0.1 * mc / GAP_TOL);
        let mut iterations = 0;
        loop {
            // Centering.
            for stage_step in 0.. {
                if stage_step >= MAX_NEWTON {
                    return Err(Error::SolverStall { iterations, context: "logistic barrier" });
                }
                iterations += 1;
                let (s, upper, lower) = self.slacks(&z).expect("iterates stay interior");
                let (fg, fh) = self.derivatives(&z);
                let inv = s.map(|v| 1.0 / v);
                let grad = t * fg - self.g.tr_mul(&inv) + upper.map(|v| 1.0 / v) - lower.map(|v| 1.0 / v);
                let mut hess = t * fh + self.g.weighted_gram(&inv.component_mul(&inv));
                for k in 0..n {
                    hess[(k, k)] += 1.0 / (upper[k] * upper[k]) + 1.0 / (lower[k] * lower[k]) + 1e-14;
                }
                let step = match hess.clone().cholesky() {
                    Some(ch) => ch.solve(&grad),
                    None => hess.clone().lu().solve(&grad).ok_or(Error::SolverStall { iterations, context: "logistic barrier" })?,
                };
                let decrement = grad.dot(&step);
                if decrement / 2.0 <= CENTERING_TOL {
                    break;
                }
                let base = self.barrier_value(&z, t).expect("interior");
                // At large t the barrier value carries too few digits for a
                // sufficient-decrease test on a step this small. Newton is in
                // its quadratic phase, so one full step finishes the stage.
                if decrement <= 1e3 * f64::EPSILON * (1.0 + base.abs()) {
                    let cand = &z - &step;
                    if self.slacks(&cand).is_some() {
                        z = cand;
                    }
                    break;
                }
                let mut alpha = 1.0;
                let moved = loop {
                    let cand = &z - alpha * &step;
                    if let Some(val) = self.barrier_value(&cand, t) {
                        if val <= base - 0.25 * alpha * decrement {
                            let moved = (&cand - &z).amax() > 1e-15 * (1.0 + z.amax());
                            z = cand;
                            break moved;
                        }
                    }
                    alpha *= 0.5;
                    if alpha < 1e-16 {
                        break false;
                    }
                };
                if !moved {
                    break;
                }
            }
            if mc / t < GAP_TOL {
                return Ok(BarrierSolution { objective: self.objective(&z), gap: mc / t, z, iterations });
            }
            t *= 10.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_logistic_regression() {
        // Features +1 and -1 with labels 1 and 0 are separable, so the loss
        // can be pushed below the barrier gap.
        let f = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let g = SparseRows::new(1);
        let prob = LogisticProblem { features: &f, labels: &[1.0, 0.0], g: &g, bound: 50.0 };
        let sol = prob.solve(&DVector::from_element(1, 0.0)).unwrap();
        assert!(sol.objective <= sol.gap && sol.gap < 1e-9);
        assert!(sol.z[0] > 20.0 && sol.z[0] < 50.0);
    }

    #[test]
    fn separable_optimum_slides_along_the_box() {
        // The separator is tilted, so the minimizer sits on a box face away
        // from any coordinate axis.
        let truth = [1.0, 2.0, -1.0, 0.5, 3.0, -2.0];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let x: Vec<f64> = (0..6).map(|k| ((i * 7 + k * 13) % 11) as f64 / 5.0 - 1.0).collect();
            let score: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum();
            if score.abs() < 0.1 {
                continue;
            }
            labels.push(if score > 0.0 { 1.0 } else { 0.0 });
            rows.extend(x);
        }
        let f = DMatrix::from_row_slice(labels.len(), 6, &rows);
        let g = SparseRows::new(6);
        let prob = LogisticProblem { features: &f, labels: &labels, g: &g, bound: DEFAULT_BOUND };
        let sol = prob.solve(&DVector::zeros(6)).unwrap();
        assert!(sol.objective <= sol.gap && sol.gap < 1e-9, "{} {}", sol.objective, sol.gap);
        assert!(sol.gap >= MIN_REPORTED_GAP);
    }

    #[test]
    fn non_separable_interior_optimum() {
        // Three examples at x = 1, two labeled 1: sigmoid(z) = 2/3 at the optimum.
        let f = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let g = SparseRows::new(1);
        let prob = LogisticProblem { features: &f, labels: &[1.0, 0.0, 1.0], g: &g, bound: DEFAULT_BOUND };
        let sol = prob.solve(&DVector::from_element(1, 0.0)).unwrap();
        assert!((sol.z[0] - 2f64.ln()).abs() < 1e-6, "{}", sol.z[0]);
    }

    #[test]
    fn constraint_binds() {
        // Labels pull z negative; the constraint z >= 0 holds it at zero.
        let f = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let mut g = SparseRows::new(1);
        g.push(vec![(0, 1.0)]);
        let prob = LogisticProblem { features: &f, labels: &[0.0, 0.0], g: &g, bound: DEFAULT_BOUND };
        let sol = prob.solve(&DVector::from_element(1, 1.0)).unwrap();
        assert!(sol.z[0] >= 0.0 && sol.z[0] < 1e-8);
        assert!((sol.objective - 2f64.ln()).abs() < 1e-8);
        assert!(prob.solve(&DVector::from_element(1, -1.0)).is_err());
    }
}
