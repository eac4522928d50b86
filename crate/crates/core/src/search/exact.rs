use itertools::Itertools;
use nalgebra::DVector;

use super::{SearchResult, SearchSpec, SearchTrace, TerminalReason, TraceStep};
use crate::arrangement::{canonical_key, enumerate_chambers, unit_groups, ActivationPattern, DEFAULT_CHAMBER_CAP};
use crate::error::{Error, Result};
use crate::solver::region::RegionSolution;

pub const DEFAULT_REGION_CAP: u128 = 1_000_000;

/// Number of regions exact search visits with `chambers` single-unit rows:
/// units sharing an output weight are interchangeable, so each group of
/// size `g` contributes the multisets of size `g`.
pub fn exact_region_count(chambers: usize, v: &[f64]) -> u128 {
    let groups = unit_groups(v);
    let mut total: u128 = 1;
    for label in groups.iter().copied().unique() {
        let g = groups.iter().filter(|&&x| x == label).count() as u128;
        let k = chambers as u128;
        // C(k + g - 1, g), built up incrementally to stay exact.
        let mut count: u128 = 1;
        for i in 0..g {
            count = count.saturating_mul(k + i) / (i + 1);
        }
        total = total.saturating_mul(count);
    }
    total
}

/// Global minimum of the training loss over every activation pattern, by
/// solving the region problem on each one. Ties keep the first region in
/// enumeration order.
pub fn exact_erm(spec: &SearchSpec<'_>, cap: u128) -> Result<SearchResult> {
    spec.check()?;
    let ds = spec.dataset;
    let chambers = enumerate_chambers(ds, DEFAULT_CHAMBER_CAP)?;
    let required = exact_region_count(chambers.len(), spec.v);
    if required > cap {
        return Err(Error::ComplexityRefused { what: "exact ERM", required, cap });
    }
    let groups = unit_groups(spec.v);
    let labels: Vec<usize> = groups.iter().copied().unique().collect();
    let positions: Vec<Vec<usize>> =
        labels.iter().map(|&l| (0..spec.m()).filter(|&j| groups[j] == l).collect()).collect();
    let choices = positions.iter().map(|pos| (0..chambers.len()).combinations_with_replacement(pos.len()).collect::<Vec<_>>());

    let mut steps = Vec::new();
    let mut best: Option<(ActivationPattern, RegionSolution)> = None;
    let mut rows = vec![Vec::new(); spec.m()];
    let mut witnesses = vec![DVector::zeros(ds.p()); spec.m()];
    for combo in choices.multi_cartesian_product() {
        for (pos, picks) in positions.iter().zip(&combo) {
            for (&j, &k) in pos.iter().zip(picks) {
                rows[j] = chambers.patterns[k].clone();
                witnesses[j] = chambers.witnesses[k].clone();
            }
        }
        let pattern = ActivationPattern::from_rows(rows.clone())?;
        let sol = spec.solve(&pattern, &witnesses)?;
        steps.push(TraceStep { key: canonical_key(&pattern, &groups), loss: sol.loss, qp_solves: 1 });
        if best.as_ref().is_none_or(|(_, b)| sol.loss < b.loss) {
            best = Some((pattern, sol));
        }
    }
    let (pattern, sol) = best.expect("at least one chamber exists");
    let trace = SearchTrace { total_qp_solves: steps.len(), steps, terminal_reason: TerminalReason::ExactComplete };
    Ok(spec.finish(pattern, &sol, trace))
}
