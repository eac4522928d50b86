use std::collections::HashSet;

use nalgebra::DVector;
use rand::seq::SliceRandom;

use super::{random_weights, SearchResult, SearchSpec, SearchTrace, TerminalReason, TraceStep};
use crate::arrangement::{canonical_key, pattern_of_weights, unit_groups, ActivationPattern, FeasibilityCache};
use crate::error::{Error, Result};
use crate::network::LossKind;
use crate::rng::{self, Stream};
use crate::solver::barrier::MIN_REPORTED_GAP;
use crate::solver::region::RegionSolution;

/// Normalized slack below which a sign constraint counts as tight.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-6;

/// A move must lower the loss by this relative amount, so solver noise
/// cannot produce endless sideways steps.
const IMPROVE_RTOL: f64 = 1e-9;

/// Logistic region solves are only certified to within their barrier gap,
/// so on separable data a smaller drop is indistinguishable from noise.
fn improves(candidate: &RegionSolution, current: &RegionSolution, loss: LossKind) -> bool {
    let mut margin = IMPROVE_RTOL * current.loss.abs();
    if loss == LossKind::Logistic {
        margin = margin.max(candidate.kkt_residual);
    }
    candidate.loss < current.loss - margin
}

/// The logistic loss is nonnegative and no solve certifies a gap below
/// [`MIN_REPORTED_GAP`], so below that no neighbor can pass [`improves`].
fn settled(current: &RegionSolution, loss: LossKind) -> bool {
    loss == LossKind::Logistic && current.loss <= MIN_REPORTED_GAP
}

struct Walker<'s, 'd> {
    spec: &'s SearchSpec<'d>,
    cache: FeasibilityCache<'d>,
    groups: Vec<usize>,
    pattern: ActivationPattern,
    witnesses: Vec<DVector<f64>>,
    sol: RegionSolution,
    steps: Vec<TraceStep>,
    total: usize,
}

impl<'s, 'd> Walker<'s, 'd> {
    fn start(spec: &'s SearchSpec<'d>, seed: u64) -> Result<Self> {
        spec.check()?;
        let mut cache = FeasibilityCache::new(spec.dataset);
        let pattern = pattern_of_weights(&random_weights(spec.dataset, spec.m(), seed), spec.dataset);
        let witnesses = pattern
            .rows()
            .map(|row| cache.witness(row)?.ok_or_else(|| Error::Infeasible("sampled pattern has no witness".into())))
            .collect::<Result<Vec<_>>>()?;
        let sol = spec.solve(&pattern, &witnesses)?;
        let groups = unit_groups(spec.v);
        let steps = vec![TraceStep { key: canonical_key(&pattern, &groups), loss: sol.loss, qp_solves: 1 }];
        Ok(Self { spec, cache, groups, pattern, witnesses, sol, steps, total: 1 })
    }

    /// Witnesses for `cand`, or `None` if one of its rows is infeasible.
    fn witnesses_for(&mut self, cand: &ActivationPattern) -> Result<Option<Vec<DVector<f64>>>> {
        let mut out = self.witnesses.clone();
        for j in 0..cand.m() {
            if cand.row(j) != self.pattern.row(j) {
                match self.cache.witness(cand.row(j))? {
                    Some(w) => out[j] = w,
                    None => return Ok(None),
                }
            }
        }
        Ok(Some(out))
    }

    fn accept(&mut self, pattern: ActivationPattern, witnesses: Vec<DVector<f64>>, sol: RegionSolution, solves: usize) {
        self.steps.push(TraceStep { key: canonical_key(&pattern, &self.groups), loss: sol.loss, qp_solves: solves });
        self.pattern = pattern;
        self.witnesses = witnesses;
        self.sol = sol;
    }

    fn finish(self, reason: TerminalReason) -> SearchResult {
        let trace = SearchTrace { steps: self.steps, terminal_reason: reason, total_qp_solves: self.total };
        self.spec.finish(self.pattern, &self.sol, trace)
    }
}

/// Greedy local search: from a random vertex, repeatedly solve every
/// feasible one-flip neighbor and move to the best one while it improves.
/// Equal losses are resolved by the smaller canonical key.
pub fn gls(spec: &SearchSpec<'_>, max_steps: usize, seed: u64) -> Result<SearchResult> {
    let mut walk = Walker::start(spec, seed)?;
    for _ in 0..max_steps {
        if settled(&walk.sol, spec.loss) {
            return Ok(walk.finish(TerminalReason::LocalMin));
        }
        let current_key = canonical_key(&walk.pattern, &walk.groups);
        let mut seen = HashSet::from([current_key]);
        let mut best: Option<(String, ActivationPattern, Vec<DVector<f64>>, RegionSolution)> = None;
        let mut solves = 0;
        for (j, i) in walk.cache.neighbors(&walk.pattern)? {
            let cand = walk.pattern.flipped(j, i);
            let key = canonical_key(&cand, &walk.groups);
            if !seen.insert(key.clone()) {
                continue;
            }
            let wit = walk.witnesses_for(&cand)?.expect("neighbor rows are feasible");
            let sol = spec.solve(&cand, &wit)?;
            solves += 1;
            let better = match &best {
                None => true,
                Some((bkey, _, _, bsol)) => sol.loss < bsol.loss || (sol.loss == bsol.loss && key < *bkey),
            };
            if better {
                best = Some((key, cand, wit, sol));
            }
        }
        walk.total += solves;
        match best {
            Some((_, cand, wit, sol)) if improves(&sol, &walk.sol, spec.loss) => walk.accept(cand, wit, sol, solves),
            _ => return Ok(walk.finish(TerminalReason::LocalMin)),
        }
    }
    Ok(walk.finish(TerminalReason::MaxSteps))
}

/// First-improvement local search that tries the tight constraints of the
/// current optimum first: the vertex with all of them flipped, then each of
/// them alone, then every other neighbor in seeded random order.
pub fn mgls(spec: &SearchSpec<'_>, max_steps: usize, seed: u64, active_tol: f64) -> Result<SearchResult> {
    let mut walk = Walker::start(spec, seed)?;
    let mut rng = rng::stream(seed, Stream::Search);
    let (m, n) = (walk.pattern.m(), walk.pattern.n());
    for _ in 0..max_steps {
        if settled(&walk.sol, spec.loss) {
            return Ok(walk.finish(TerminalReason::LocalMin));
        }
        let active = tight_constraints(spec, &walk.sol, active_tol);
        let mut order: Vec<Vec<(usize, usize)>> = Vec::new();
        if active.len() > 1 {
            order.push(active.clone());
        }
        order.extend(active.iter().map(|&f| vec![f]));
        let active_set: HashSet<(usize, usize)> = active.iter().copied().collect();
        let mut rest: Vec<(usize, usize)> =
            (0..m).flat_map(|j| (0..n).map(move |i| (j, i))).filter(|f| !active_set.contains(f)).collect();
        rest.shuffle(&mut rng);
        order.extend(rest.into_iter().map(|f| vec![f]));

        let mut seen = HashSet::from([canonical_key(&walk.pattern, &walk.groups)]);
        let mut solves = 0;
        let mut moved = None;
        for flips in order {
            let mut cand = walk.pattern.clone();
            for &(j, i) in &flips {
                cand = cand.flipped(j, i);
            }
            let Some(wit) = walk.witnesses_for(&cand)? else { continue };
            if !seen.insert(canonical_key(&cand, &walk.groups)) {
                continue;
            }
            let sol = spec.solve(&cand, &wit)?;
            solves += 1;
            if improves(&sol, &walk.sol, spec.loss) {
                moved = Some((cand, wit, sol));
                break;
            }
        }
        walk.total += solves;
        match moved {
            Some((cand, wit, sol)) => walk.accept(cand, wit, sol, solves),
            None => return Ok(walk.finish(TerminalReason::LocalMin)),
        }
    }
    Ok(walk.finish(TerminalReason::MaxSteps))
}

/// `(unit, example)` pairs whose normalized preactivation at the region
/// optimum is within `tol` of zero.
fn tight_constraints(spec: &SearchSpec<'_>, sol: &RegionSolution, tol: f64) -> Vec<(usize, usize)> {
    let ds = spec.dataset;
    let mut out = Vec::new();
    for j in 0..sol.w.nrows() {
        for i in 0..ds.n() {
            let x = ds.xbar_col(i);
            let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let h: f64 = x.iter().enumerate().map(|(k, a)| a * sol.w[(j, k)]).sum::<f64>() / norm;
            if h.abs() <= tol {
                out.push((j, i));
            }
        }
    }
    out
}
