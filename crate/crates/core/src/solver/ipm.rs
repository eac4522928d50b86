//! Primal-dual interior point method for convex quadratic programs
//!
//! ```text
//! minimize 0.5 z^T Q z + q^T z   subject to   G z >= h
//! ```
//!
//! with Mehrotra predictor-corrector steps, plus an active-set polish that
//! snaps the interior iterate onto the face it converged to.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const STEP_FRACTION: f64 = 0.99;
const RIDGE: f64 = 1e-10;

/// Row-sparse constraint matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, rows: Vec::new() }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut out = Self::new(m.ncols());
        for i in 0..m.nrows() {
            out.push((0..m.ncols()).filter(|&k| m[(i, k)] != 0.0).map(|k| (k, m[(i, k)])).collect());
        }
        out
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>) {
        debug_assert!(row.iter().all(|&(k, _)| k < self.ncols));
        self.rows.push(row);
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_dot(&self, i: usize, z: &DVector<f64>) -> f64 {
        self.rows[i].iter().map(|&(k, v)| v * z[k]).sum()
    }

    pub fn mul(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.nrows(), (0..self.nrows()).map(|i| self.row_dot(i, z)))
    }

    pub fn tr_mul(&self, lam: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for (row, l) in self.rows.iter().zip(lam.iter()) {
            for &(k, v) in row {
                out[k] += v * l;
            }
        }
        out
    }

    /// `G^T diag(d) G`.
    pub fn weighted_gram(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ncols, self.ncols);
        for (row, w) in self.rows.iter().zip(d.iter()) {
            for &(a, va) in row {
                for &(b, vb) in row {
                    out[(a, b)] += w * va * vb;
                }
            }
        }
        out
    }

    fn select_dense(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(idx.len(), self.ncols);
        for (r, &i) in idx.iter().enumerate() {
            for &(k, v) in &self.rows[i] {
                out[(r, k)] += v;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hess: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub g: SparseRows,
    pub h: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub objective: f64,
    /// Scaled stationarity, complementarity and feasibility residual.
    pub kkt_residual: f64,
    /// Largest violation `max(0, h_i - g_i^T z)`.
    pub max_violation: f64,
    pub iterations: usize,
}

impl QuadraticProgram {
    pub fn n(&self) -> usize {
        self.lin.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hess * z)) + self.lin.dot(z)
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.hess * z + &self.lin
    }

    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        (0..self.g.nrows()).map(|i| self.h[i] - self.g.row_dot(i, z)).fold(0.0, f64::max)
    }

    /// Violation tolerated at `z`: round-off in `G z` grows with `|z|`.
    fn feasibility_tol(&self, z: &DVector<f64>) -> f64 {
        let gmax = (0..self.g.nrows()).flat_map(|i| self.g.row(i).iter().map(|&(_, v)| v.abs())).fold(0.0, f64::max);
        1e-12 * (1.0 + self.h.amax() + gmax * z.amax())
    }

    fn dual_scale(&self, z: &DVector<f64>) -> f64 {
        1.0 + self.lin.amax().max((&self.hess * z).amax())
    }

    /// Residual of the KKT conditions at `(z, lambda)`.
    pub fn kkt_residual(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let scale = self.dual_scale(z);
        let lam = lambda.map(|l| l.max(0.0));
        let stationarity = (self.gradient(z) - self.g.tr_mul(&lam)).amax() / scale;
        let slack = self.g.mul(z) - &self.h;
        let complementarity = slack.iter().zip(lam.iter()).map(|(s, l)| (s * l).abs()).sum::<f64>()
            / (1.0 + self.objective(z).abs());
        let dual_infeasibility = lambda.iter().fold(0.0f64, |a, l| a.max(-l)) / scale;
        stationarity.max(complementarity).max(dual_infeasibility).max(self.max_violation(z))
    }

    fn solution(&self, z: DVector<f64>, lambda: DVector<f64>, iterations: usize) -> QpSolution {
        QpSolution {
            objective: self.objective(&z),
            kkt_residual: self.kkt_residual(&z, &lambda),
            max_violation: self.max_violation(&z),
            z,
            lambda,
            iterations,
        }
    }
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    match m.clone().cholesky() {
        Some(ch) => Some(ch.solve(rhs)),
        None => m.clone().lu().solve(rhs),
    }
}

/// Factorization of the reduced Newton matrix. Near convergence the
/// barrier weights span many orders of magnitude, so the ridge grows with
/// the diagonal until Cholesky succeeds, with an SVD solve as last resort.
enum NewtonSystem {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Svd(nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl NewtonSystem {
    fn factor(kkt: DMatrix<f64>) -> Option<Self> {
        let n = kkt.nrows();
        let diag = (0..n).map(|k| kkt[(k, k)].abs()).fold(0.0, f64::max);
        for ridge in [RIDGE, 1e-14 * diag, 1e-12 * diag, 1e-10 * diag] {
            let mut m = kkt.clone();
            for k in 0..n {
                m[(k, k)] += ridge.max(RIDGE);
            }
            if let Some(ch) = m.cholesky() {
                return Some(Self::Cholesky(ch));
            }
        }
        kkt.iter().all(|v| v.is_finite()).then(|| Self::Svd(kkt.svd(true, true)))
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let out = match self {
            Self::Cholesky(ch) => ch.solve(rhs),
            Self::Svd(svd) => svd.solve(rhs, 1e-14 * svd.singular_values.max()).ok()?,
        };
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

fn max_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter().zip(dx.iter()).filter(|(_, d)| **d < 0.0).map(|(x, d)| -x / d).fold(1.0f64 / STEP_FRACTION, f64::min)
}

/// Runs the interior point method from `start` (or the origin).
pub fn solve_qp(qp: &QuadraticProgram, start: Option<&DVector<f64>>) -> Result<QpSolution> {
    let n = qp.n();
    let mc = qp.g.nrows();
    let mut z = start.cloned().unwrap_or_else(|| DVector::zeros(n));
    if mc == 0 {
        let grad = qp.gradient(&z);
        let dz = qp.hess.clone().svd(true, true).solve(&(-grad), 1e-12).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        z += dz;
        return Ok(qp.solution(z, DVector::zeros(0), 1));
    }
    let mut s = (qp.g.mul(&z) - &qp.h).map(|r| r.max(1.0));
    let mut lam = DVector::from_element(mc, 1.0);
    let hscale = 1.0 + qp.h.amax();
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    let mut stalled = 0;
    let mut prev_gap = f64::INFINITY;
    let mut converged_primal = 0;

    for iter in 0..MAX_ITER {
        let r_d = qp.gradient(&z) - qp.g.tr_mul(&lam);
        let r_p = qp.g.mul(&z) - &s - &qp.h;
        let gap = s.dot(&lam);
        let mu = gap / mc as f64;
        let f = qp.objective(&z);
        let dual_ok = r_d.amax() <= 1e-11 * qp.dual_scale(&z);
        let primal_ok = r_p.amax() <= 1e-12 * hscale;
        let merit = (r_d.amax() / qp.dual_scale(&z)).max(r_p.amax() / hscale).max(gap / (1.0 + f.abs()));
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, z.clone(), lam.clone()));
        }
        let complementary = gap <= 1e-14 * (1.0 + f.abs());
        if dual_ok && primal_ok && complementary {
            return Ok(qp.solution(z, lam, iter));
        }
        // Huge barrier weights can leave the dual residual stuck once the
        // primal side has converged. A polish on the current face finishes the job.
        converged_primal = if primal_ok && complementary { converged_primal + 1 } else { 0 };
        if converged_primal % 5 == 4 {
            if let Some(p) = polish(qp, &qp.solution(z.clone(), lam.clone(), iter)).filter(|p| p.kkt_residual <= 1e-9) {
                return Ok(p);
            }
        }

        let d = lam.component_div(&s);
        let Some(newton) = NewtonSystem::factor(&qp.hess + qp.g.weighted_gram(&d)) else { break };
        let solve = |rhs: &DVector<f64>| newton.solve(rhs);
        let direction = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
            let inner = r_c.component_div(&s) + d.component_mul(&r_p);
            let rhs = -(&r_d + qp.g.tr_mul(&inner));
            let dz = solve(&rhs)?;
            let ds = qp.g.mul(&dz) + &r_p;
            let dl = -(r_c.component_div(&s)) - d.component_mul(&ds);
            Some((dz, ds, dl))
        };

        let r_aff = s.component_mul(&lam);
        let Some((_, ds_a, dl_a)) = direction(&r_aff) else { break };
        let a_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a)).min(1.0);
        let mu_aff = (&s + a_aff * &ds_a).dot(&(&lam + a_aff * &dl_a)) / mc as f64;
        // The second-order correction can lock degenerate problems into a
        // cycle with a constant gap. After a step without progress, fall
        // back to a plain path-following step.
        let progressing = gap <= 0.9 * prev_gap;
        let r_c = if !progressing {
            r_aff - DVector::from_element(mc, 0.3 * mu)
        } else {
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            r_aff + ds_a.component_mul(&dl_a) - DVector::from_element(mc, sigma * mu)
        };
        prev_gap = gap;
        let Some((dz, ds, dl)) = direction(&r_c) else { break };
        let alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&lam, &dl))).min(1.0);
        z += alpha * &dz;
        s += alpha * &ds;
        lam += alpha * &dl;
        s.iter_mut().for_each(|v| *v = v.max(1e-300));
        lam.iter_mut().for_each(|v| *v = v.max(1e-300));
        if alpha < 1e-10 {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    // The lowest-merit iterate and the last one can sit on different
    // faces, so both get a chance at the polish.
    let (_, bz, blam) = best.expect("at least one iterate");
    [qp.solution(bz, blam, MAX_ITER), qp.solution(z, lam, MAX_ITER)]
        .into_iter()
        .map(|sol| if sol.kkt_residual > 1e-7 { polish(qp, &sol).unwrap_or(sol) } else { sol })
        .filter(|sol| sol.kkt_residual <= 1e-7)
        .min_by(|a, b| a.kkt_residual.total_cmp(&b.kkt_residual))
        .ok_or(Error::SolverStall { iterations: MAX_ITER, context: "interior point" })
}

/// Moves an interior point solution onto the face given by its apparent
/// active set (constraints with slack below their multiplier), minimizing
/// the objective on that face. Weakly active rows are easy to misread, so a
/// few primal active-set steps follow: a row that blocks the move joins the
/// working set and a row with a negative multiplier leaves it. Returns the
/// polished point when it is feasible, no worse, and has an acceptable KKT
/// residual.
pub fn polish(qp: &QuadraticProgram, sol: &QpSolution) -> Option<QpSolution> {
    let slack = qp.g.mul(&sol.z) - &qp.h;
    let mut active: Vec<usize> = (0..qp.g.nrows()).filter(|&i| slack[i] < sol.lambda[i]).collect();
    let mut z = sol.z.clone();
    let mut lambda;
    let mut steps = 0;
    loop {
        let target = face_minimizer(qp, &z, &active)?;
        let dir = &target - &z;
        // Ratio test against the rows outside the working set.
        let mut alpha = 1.0f64;
        let mut blocking = None;
        for i in (0..qp.g.nrows()).filter(|i| !active.contains(i)) {
            let rate = qp.g.row_dot(i, &dir);
            let at = qp.g.row_dot(i, &target) - qp.h[i];
            if rate < 0.0 && at < -qp.feasibility_tol(&target) {
                let room = (qp.g.row_dot(i, &z) - qp.h[i]).max(0.0);
                let step = room / -rate;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        z += alpha * dir;
        steps += 1;
        if let Some(i) = blocking {
            active.push(i);
        } else {
            lambda = face_multipliers(qp, &z, &active)?;
            // A negative multiplier means the objective improves off that row.
            let lam_tol = 1e-9 * qp.dual_scale(&z);
            let worst = (0..active.len()).filter(|&k| lambda[active[k]] < -lam_tol).min_by(|&a, &b| lambda[active[a]].total_cmp(&lambda[active[b]]));
            match worst {
                Some(k) => {
                    active.remove(k);
                }
                None => break,
            }
        }
        if steps > 4 * (qp.n() + qp.g.nrows()) {
            lambda = face_multipliers(qp, &z, &active)?;
            break;
        }
    }
    let polished = qp.solution(z, lambda, sol.iterations);
    let no_worse = polished.objective <= sol.objective;
    let certified = polished.kkt_residual <= sol.kkt_residual.max(1e-9);
    (no_worse && certified && polished.max_violation <= qp.feasibility_tol(&polished.z)).then_some(polished)
}

/// Least-squares multipliers for the `active` rows at `z`, zero elsewhere.
fn face_multipliers(qp: &QuadraticProgram, z: &DVector<f64>, active: &[usize]) -> Option<DVector<f64>> {
    let mut lambda = DVector::zeros(qp.g.nrows());
    if !active.is_empty() {
        let la = qp.g.select_dense(active).transpose().svd(true, true).solve(&qp.gradient(z), 1e-12).ok()?;
        for (k, &i) in active.iter().enumerate() {
            lambda[i] = la[k];
        }
    }
    Some(lambda)
}

/// Minimizer of the objective on the face where the `active` rows hold
/// with equality, taken closest to `from`.
fn face_minimizer(qp: &QuadraticProgram, from: &DVector<f64>, active: &[usize]) -> Option<DVector<f64>> {
    let n = qp.n();
    let (zp, null) = if active.is_empty() {
        (from.clone(), DMatrix::identity(n, n))
    } else {
        let ga = qp.g.select_dense(active);
        let ha = DVector::from_iterator(active.len(), active.iter().map(|&i| qp.h[i]));
        let correction = ga.clone().svd(true, true).solve(&(&ga * from - &ha), 1e-12).ok()?;
        let eig = (ga.transpose() * &ga).symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] <= 1e-12 * top.max(1e-300)).collect();
        (from - correction, eig.eigenvectors.select_columns(&keep))
    };
    let mut z = zp.clone();
    if null.ncols() > 0 {
        let reduced = null.transpose() * &qp.hess * &null;
        let g = null.transpose() * qp.gradient(&zp);
        let delta = reduced.svd(true, true).solve(&(-g), 1e-12 * (1.0 + qp.hess.amax())).ok()?;
        z += &null * delta;
    }
    Some(z)
}

/// Interior point solve followed by [`polish`] when it helps.
pub fn solve_qp_polished(qp: &QuadraticProgram, start: Option<&DVector<f64>>) -> Result<QpSolution> {
    let sol = solve_qp(qp, start)?;
    Ok(polish(qp, &sol).unwrap_or(sol))
}

/// Solves `min 0.5 z^T Q z + q^T z` without constraints by a minimum-norm
/// least-squares step. Used where a dense solve is all that is needed.
pub fn unconstrained_min(hess: &DMatrix<f64>, lin: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(z) = solve_spd(hess, &(-lin)) {
        if z.iter().all(|v| v.is_finite()) {
            return Some(z);
        }
    }
    hess.clone().svd(true, true).solve(&(-lin), 1e-12).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::simplex::{LinearProgram, RowSense, VarBound};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn qp(hess: DMatrix<f64>, lin: Vec<f64>, g: DMatrix<f64>, h: Vec<f64>) -> QuadraticProgram {
        QuadraticProgram { hess, lin: DVector::from_vec(lin), g: SparseRows::from_dense(&g), h: DVector::from_vec(h) }
    }

    #[test]
    fn projection_onto_halfplane() {
        // min ||z - (1, 1)||^2 / 2 s.t. z1 + z2 <= 1 -> (0.5, 0.5).
        let p = qp(DMatrix::identity(2, 2), vec![-1.0, -1.0], DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]), vec![-1.0]);
        let sol = solve_qp_polished(&p, None).unwrap();
        assert!((sol.z[0] - 0.5).abs() < 1e-12 && (sol.z[1] - 0.5).abs() < 1e-12);
        assert!((sol.lambda[0] - 0.5).abs() < 1e-9);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn inactive_constraint() {
        let p = qp(DMatrix::identity(2, 2), vec![-1.0, 0.0], DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), vec![-5.0]);
        let sol = solve_qp_polished(&p, None).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-12 && sol.z[1].abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_hessian() {
        // min (z1 + z2 - 2)^2 s.t. z1 >= 0, z2 >= 0, z1 - z2 >= 0.
        let hess = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]);
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        let p = qp(hess, vec![-4.0, -4.0], g, vec![0.0; 3]);
        let sol = solve_qp_polished(&p, None).unwrap();
        assert!((sol.objective + 4.0).abs() < 1e-12, "{}", sol.objective);
        assert!(sol.max_violation <= 1e-12);
    }

    #[test]
    fn lp_agrees_with_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 100 {
            let (n, mc) = (rng.random_range(1..=4), rng.random_range(2..=8));
            let g = DMatrix::from_fn(mc, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let h = &g * &x0 - DVector::from_fn(mc, |_, _| rng.random_range(0.0..1.0));
            // Box rows keep the problem bounded.
            let mut gb = DMatrix::zeros(mc + 2 * n, n);
            gb.rows_mut(0, mc).copy_from(&g);
            let mut hb = DVector::zeros(mc + 2 * n);
            hb.rows_mut(0, mc).copy_from(&h);
            for k in 0..n {
                gb[(mc + 2 * k, k)] = 1.0;
                gb[(mc + 2 * k + 1, k)] = -1.0;
                hb[mc + 2 * k] = -10.0;
                hb[mc + 2 * k + 1] = -10.0;
            }
            let cost: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut lp = LinearProgram::new();
            for c in &cost {
                lp.add_var(VarBound::Free, *c);
            }
            for i in 0..gb.nrows() {
                lp.add_row((0..n).map(|k| (k, gb[(i, k)])).collect(), RowSense::Ge, hb[i]);
            }
            let simplex = lp.solve().unwrap();
            assert!(simplex.min_reduced_cost >= -1e-9);
            let ipm = solve_qp(&qp(DMatrix::zeros(n, n), cost, gb, hb.as_slice().to_vec()), None).unwrap();
            assert!(
                (simplex.objective - ipm.objective).abs() <= 1e-6 * (1.0 + simplex.objective.abs()),
                "{} vs {}",
                simplex.objective,
                ipm.objective
            );
            checked += 1;
        }
    }
}
