//! Two-phase revised simplex over a dense explicit basis inverse.
//!
//! Problems are stated through [`LinearProgram`] (free or nonnegative
//! variables, `<=`, `>=` and `=` rows) and converted to the standard form
//! `min c^T x, A x = b, x >= 0, b >= 0` with one artificial per row.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const BLAND_AFTER_DEGENERATE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    Free,
    NonNeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    sense: RowSense,
    rhs: f64,
}

/// Minimize `cost^T x` subject to the added rows and variable bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    bounds: Vec<VarBound>,
    cost: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per added row, for `min` with the rows as written.
    pub duals: Vec<f64>,
    /// Smallest reduced cost over the structural columns at termination.
    pub min_reduced_cost: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, bound: VarBound, cost: f64) -> usize {
        self.bounds.push(bound);
        self.cost.push(cost);
        self.bounds.len() - 1
    }

    pub fn add_vars(&mut self, count: usize, bound: VarBound, cost: f64) -> std::ops::Range<usize> {
        let start = self.bounds.len();
        for _ in 0..count {
            self.add_var(bound, cost);
        }
        start..self.bounds.len()
    }

    pub fn num_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.bounds.len()));
        self.rows.push(Row { coeffs, sense, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let sf = StandardForm::build(self);
        let cap = 50 * (sf.a.nrows() + sf.a.ncols()) + 1000;
        let mut engine = Engine::new(&sf, cap);
        engine.run(&sf.phase1_cost(), true)?;
        let infeas: f64 = engine.basic_values().iter().zip(&engine.basis).filter(|(_, &j)| sf.is_artificial(j)).map(|(v, _)| *v).sum();
        let scale = 1.0 + sf.b.amax();
        if infeas > 1e-8 * scale {
            return Err(Error::Infeasible(format!("phase one residual {infeas:.3e}")));
        }
        engine.drive_out_artificials(&sf);
        engine.bar_artificials = true;
        let cost = sf.phase2_cost();
        engine.run(&cost, false)?;
        Ok(sf.recover(self, &engine, &cost))
    }
}

struct StandardForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: Vec<f64>,
    /// Original variable `j` maps to column `pos[j]` and, when free, to the
    /// negative part at `neg[j]`.
    pos: Vec<usize>,
    neg: Vec<Option<usize>>,
    row_sign: Vec<f64>,
    n_structural: usize,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let mut pos = Vec::with_capacity(lp.num_vars());
        let mut neg = Vec::with_capacity(lp.num_vars());
        let mut c = Vec::new();
        for (j, bound) in lp.bounds.iter().enumerate() {
            pos.push(c.len());
            c.push(lp.cost[j]);
            if *bound == VarBound::Free {
                neg.push(Some(c.len()));
                c.push(-lp.cost[j]);
            } else {
                neg.push(None);
            }
        }
        let n_slack = lp.rows.iter().filter(|r| r.sense != RowSense::Eq).count();
        let n_structural = c.len() + n_slack;
        let mut a = DMatrix::zeros(m, n_structural + m);
        let mut b = DVector::zeros(m);
        let mut row_sign = vec![1.0; m];
        let mut slack = c.len();
        c.resize(n_structural + m, 0.0);
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                a[(i, pos[j])] += v;
                if let Some(nj) = neg[j] {
                    a[(i, nj)] -= v;
                }
            }
            match row.sense {
                RowSense::Le => {
                    a[(i, slack)] = 1.0;
                    slack += 1;
                }
                RowSense::Ge => {
                    a[(i, slack)] = -1.0;
                    slack += 1;
                }
                RowSense::Eq => {}
            }
            b[i] = row.rhs;
            if row.rhs < 0.0 {
                row_sign[i] = -1.0;
                b[i] = -row.rhs;
                for k in 0..n_structural {
                    a[(i, k)] = -a[(i, k)];
                }
            }
            a[(i, n_structural + i)] = 1.0;
        }
        Self { a, b, c, pos, neg, row_sign, n_structural }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_structural
    }

    fn phase1_cost(&self) -> Vec<f64> {
        (0..self.a.ncols()).map(|j| if self.is_artificial(j) { 1.0 } else { 0.0 }).collect()
    }

    fn phase2_cost(&self) -> Vec<f64> {
        let mut c = self.c.clone();
        c[self.n_structural..].iter_mut().for_each(|v| *v = 0.0);
        c
    }

    fn recover(&self, lp: &LinearProgram, engine: &Engine, cost: &[f64]) -> LpSolution {
        let mut z = vec![0.0; self.a.ncols()];
        for (r, &j) in engine.basis.iter().enumerate() {
            z[j] = engine.xb[r];
        }
        let x: Vec<f64> = (0..lp.num_vars()).map(|j| z[self.pos[j]] - self.neg[j].map_or(0.0, |nj| z[nj])).collect();
        let objective = x.iter().zip(&lp.cost).map(|(a, b)| a * b).sum();
        let y = engine.duals(cost);
        let duals = y.iter().zip(&self.row_sign).map(|(y, s)| y * s).collect();
        let min_reduced_cost = (0..self.n_structural)
            .filter(|j| !engine.in_basis[*j])
            .map(|j| cost[j] - self.a.column(j).dot(&y))
            .fold(0.0, f64::min);
        LpSolution { x, objective, duals, min_reduced_cost, iterations: engine.iterations }
    }
}

struct Engine<'a> {
    sf: &'a StandardForm,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    iterations: usize,
    since_refactor: usize,
    cap: usize,
    bar_artificials: bool,
}

impl<'a> Engine<'a> {
    fn new(sf: &'a StandardForm, cap: usize) -> Self {
        let m = sf.a.nrows();
        let basis: Vec<usize> = (sf.n_structural..sf.n_structural + m).collect();
        let mut in_basis = vec![false; sf.a.ncols()];
        basis.iter().for_each(|&j| in_basis[j] = true);
        Self {
            sf,
            basis,
            in_basis,
            binv: DMatrix::identity(m, m),
            xb: sf.b.clone(),
            iterations: 0,
            since_refactor: 0,
            cap,
            bar_artificials: false,
        }
    }

    fn basic_values(&self) -> &[f64] {
        self.xb.as_slice()
    }

    fn duals(&self, cost: &[f64]) -> DVector<f64> {
        let cb = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| cost[j]));
        self.binv.tr_mul(&cb)
    }

    fn refactor(&mut self) {
        let m = self.basis.len();
        let bmat = DMatrix::from_fn(m, m, |i, k| self.sf.a[(i, self.basis[k])]);
        if let Some(inv) = bmat.lu().try_inverse() {
            self.binv = inv;
            self.xb = &self.binv * &self.sf.b;
            self.xb.iter_mut().for_each(|v| {
                if *v < 0.0 && *v > -1e-11 {
                    *v = 0.0;
                }
            });
        }
        self.since_refactor = 0;
    }

    fn can_enter(&self, j: usize, phase1: bool) -> bool {
        !self.in_basis[j] && (phase1 || !self.bar_artificials || !self.sf.is_artificial(j))
    }

    fn run(&mut self, cost: &[f64], phase1: bool) -> Result<()> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut refreshed = false;
        loop {
            if self.iterations >= self.cap {
                return Err(Error::SolverStall { iterations: self.iterations, context: "simplex" });
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            let y = self.duals(cost);
            let cscale = 1.0 + cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            let mut entering = None;
            let mut best = -OPT_TOL * cscale;
            for j in 0..self.sf.a.ncols() {
                if !self.can_enter(j, phase1) {
                    continue;
                }
                let d = cost[j] - self.sf.a.column(j).dot(&y);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                if refreshed || self.since_refactor == 0 {
                    return Ok(());
                }
                // Confirm optimality on a fresh factorization.
                self.refactor();
                refreshed = true;
                continue;
            };
            refreshed = false;
            let u = &self.binv * self.sf.a.column(q);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..u.len() {
                if u[r] > PIVOT_TOL {
                    let ratio = self.xb[r].max(0.0) / u[r];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let better = if bland {
                                ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            } else {
                                ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && u[r] > u[lr])
                            };
                            if better {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, step)) = leave else {
                if phase1 {
                    return Err(Error::SolverStall { iterations: self.iterations, context: "simplex phase one" });
                }
                return Err(Error::Unbounded);
            };
            if step <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= BLAND_AFTER_DEGENERATE {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q, &u);
        }
    }

    fn pivot(&mut self, r: usize, q: usize, u: &DVector<f64>) {
        let m = self.basis.len();
        let ur = u[r];
        let step = self.xb[r] / ur;
        for i in 0..m {
            if i != r {
                self.xb[i] -= step * u[i];
                if self.xb[i] < 0.0 && self.xb[i] > -1e-11 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[r] = step;
        let pivot_row: Vec<f64> = (0..m).map(|k| self.binv[(r, k)] / ur).collect();
        for k in 0..m {
            self.binv[(r, k)] = pivot_row[k];
        }
        for i in 0..m {
            if i != r && u[i] != 0.0 {
                let f = u[i];
                for k in 0..m {
                    self.binv[(i, k)] -= f * pivot_row[k];
                }
            }
        }
        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
        self.iterations += 1;
        self.since_refactor += 1;
    }

    /// Replaces basic artificials (all at zero after a successful phase
    /// one) with structural columns where possible. Rows where no
    /// structural column has a nonzero entry are redundant and keep their
    /// artificial at zero.
    fn drive_out_artificials(&mut self, sf: &StandardForm) {
        for r in 0..self.basis.len() {
            if !sf.is_artificial(self.basis[r]) {
                continue;
            }
            let row = self.binv.row(r).clone_owned();
            let candidate = (0..sf.n_structural)
                .filter(|&j| !self.in_basis[j])
                .map(|j| (j, row.dot(&sf.a.column(j).transpose())))
                .filter(|(_, v)| v.abs() > 1e-7)
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
            if let Some((j, _)) = candidate {
                let u = &self.binv * sf.a.column(j);
                self.pivot(r, j, &u);
            }
        }
        self.refactor();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_textbook_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18.
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarBound::NonNeg, -3.0);
        let y = lp.add_var(VarBound::NonNeg, -5.0);
        lp.add_row(vec![(x, 1.0)], RowSense::Le, 4.0);
        lp.add_row(vec![(y, 2.0)], RowSense::Le, 12.0);
        lp.add_row(vec![(x, 3.0), (y, 2.0)], RowSense::Le, 18.0);
        let sol = lp.solve().unwrap();
        assert!((sol.x[x] - 2.0).abs() < 1e-9 && (sol.x[y] - 6.0).abs() < 1e-9);
        assert!((sol.objective + 36.0).abs() < 1e-9);
        assert!(sol.min_reduced_cost >= -1e-9);
        // Duals: (0, -1.5, -1) for the rows as written.
        assert!((sol.duals[1] + 1.5).abs() < 1e-9 && (sol.duals[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |x - 3| written as min t, t >= x - 3, t >= 3 - x, x free.
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarBound::Free, 0.0);
        let t = lp.add_var(VarBound::NonNeg, 1.0);
        lp.add_row(vec![(t, 1.0), (x, -1.0)], RowSense::Ge, -3.0);
        lp.add_row(vec![(t, 1.0), (x, 1.0)], RowSense::Ge, 3.0);
        let sol = lp.solve().unwrap();
        assert!(sol.objective.abs() < 1e-9);
        assert!((sol.x[x] - 3.0).abs() < 1e-9);

        let mut lp = LinearProgram::new();
        let a = lp.add_var(VarBound::Free, 1.0);
        let b = lp.add_var(VarBound::Free, 2.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], RowSense::Eq, -2.0);
        lp.add_row(vec![(a, 1.0), (b, -1.0)], RowSense::Eq, 4.0);
        let sol = lp.solve().unwrap();
        assert!((sol.x[a] - 1.0).abs() < 1e-9 && (sol.x[b] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarBound::NonNeg, 1.0);
        lp.add_row(vec![(x, 1.0)], RowSense::Le, -1.0);
        assert!(matches!(lp.solve(), Err(Error::Infeasible(_))));

        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarBound::Free, -1.0);
        lp.add_row(vec![(x, 1.0)], RowSense::Ge, 0.0);
        assert!(matches!(lp.solve(), Err(Error::Unbounded)));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarBound::NonNeg, 1.0);
        let y = lp.add_var(VarBound::NonNeg, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], RowSense::Eq, 2.0);
        lp.add_row(vec![(x, 2.0), (y, 2.0)], RowSense::Eq, 4.0);
        lp.add_row(vec![(x, 1.0)], RowSense::Ge, 0.5);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-9);
        assert!(sol.x[x] >= 0.5 - 1e-9);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the textbook rule.
        let mut lp2 = LinearProgram::new();
        for c in [-0.75, 150.0, -0.02, 6.0] {
            lp2.add_var(VarBound::NonNeg, c);
        }
        lp2.add_row(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], RowSense::Le, 0.0);
        lp2.add_row(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], RowSense::Le, 0.0);
        lp2.add_row(vec![(2, 1.0)], RowSense::Le, 1.0);
        let sol = lp2.solve().unwrap();
        assert!((sol.objective + 0.05).abs() < 1e-9, "{}", sol.objective);
    }
}
