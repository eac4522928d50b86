//! Every covering family over a universe of at most four elements with at
//! most four subsets, in both dataset variants. The full sweep takes several
//! minutes, so it only runs on request:
//! `cargo test -p relu-zono --test set_cover_exhaustive -- --ignored`.

use itertools::Itertools;
use relu_zono::data::{gen_set_cover_dataset, SetCoverDatasetOptions, SetCoverInstance};
use relu_zono::search::{exact_erm, SearchSpec};
use relu_zono::LossKind;

/// `(seed, universe, family)` for each covering family, in a fixed order.
fn covering_families() -> Vec<(u64, usize, Vec<Vec<usize>>)> {
    let mut out = Vec::new();
    for universe in 1..=4usize {
        let subsets: Vec<Vec<usize>> =
            (1u32..(1 << universe)).map(|mask| (1..=universe).filter(|&u| mask >> (u - 1) & 1 == 1).collect()).collect();
        for m in 1..=4usize {
            for family in subsets.iter().cloned().combinations_with_replacement(m) {
                if family.iter().flatten().unique().count() == universe {
                    out.push((out.len() as u64, universe, family));
                }
            }
        }
    }
    out
}

/// Mismatches between the loss threshold and cover existence, plus solver errors.
fn check(seed: u64, universe: usize, family: &[Vec<usize>]) -> Vec<String> {
    let mut failures = Vec::new();
    let m = family.len();
    let inst = SetCoverInstance::new(universe, family.to_vec(), 1).unwrap();
    let d = m + 2;
    let variants = [
        SetCoverDatasetOptions::degenerate(),
        SetCoverDatasetOptions::general_position(0.2 / (2 * d) as f64, 0.4 / (2 * d) as f64, seed),
    ];
    for opts in variants {
        let ds = gen_set_cover_dataset(&inst, &opts).unwrap();
        let spec = SearchSpec { dataset: &ds, v: &[1.0], loss: LossKind::Mse, fit_output_bias: false };
        let loss = match exact_erm(&spec, u128::MAX) {
            Ok(r) => r.loss,
            Err(e) => {
                failures.push(format!("U={universe} T={family:?}: {e}"));
                continue;
            }
        };
        let unit = inst.gamma().powi(2) / ds.n() as f64;
        for t in 1..=m {
            if (loss <= t as f64 * unit * (1.0 + 1e-6)) != inst.has_cover_of_size(t) {
                failures.push(format!("U={universe} T={family:?} t={t}: loss {loss:e}"));
            }
        }
    }
    failures
}

#[test]
fn families_with_degenerate_region_programs() {
    // Their general-position datasets produce region QPs that once cycled or
    // stalled in the interior point method.
    let hard: [&[&[usize]]; 7] = [
        &[&[2, 3, 4], &[2, 3, 4], &[1, 2, 3, 4]],
        &[&[1], &[4], &[4], &[2, 3, 4]],
        &[&[2], &[1, 3], &[4], &[2, 4]],
        &[&[1, 2, 3], &[1, 4], &[1, 2, 4], &[1, 2, 3, 4]],
        &[&[1, 4], &[1, 4], &[1, 3, 4], &[1, 2, 3, 4]],
        &[&[1, 3], &[1, 2, 3], &[1, 2, 3], &[4]],
        &[&[1, 2, 4], &[1, 2, 4], &[1, 2, 4], &[1, 3, 4]],
    ];
    let all = covering_families();
    let mut failures = Vec::new();
    for family in hard {
        let family: Vec<Vec<usize>> = family.iter().map(|s| s.to_vec()).collect();
        let (seed, universe, _) = all.iter().find(|(_, u, f)| *u == 4 && *f == family).expect("listed family covers");
        failures.extend(check(*seed, *universe, &family));
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
#[ignore = "several minutes; run with --ignored"]
fn loss_threshold_matches_cover_size_up_to_four() {
    let all = covering_families();
    assert_eq!(all.len(), 3016);
    let failures: Vec<String> = all.iter().flat_map(|(seed, universe, family)| check(*seed, *universe, family)).collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
