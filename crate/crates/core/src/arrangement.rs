//! Activation patterns and the chambers of the hyperplane arrangement
//! `{w : w^T xbar_i = 0}` cut out by the training examples.
//!
//! A binary row `a` is feasible when some `w` has `w^T xbar_i > 0` exactly
//! where `a_i = 1`. Feasible rows are the chambers of the arrangement, which
//! are also the vertices of the zonotope generated by the examples, and an
//! m-unit pattern is a vertex of its m-th Cartesian power.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::solver::simplex::{LinearProgram, RowSense, VarBound};

/// An `m x n` binary matrix, one row per hidden unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    m: usize,
    n: usize,
    bits: Vec<bool>,
}

impl ActivationPattern {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, bits: vec![false; m * n] }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("pattern rows must be nonempty and equally long".into()));
        }
        Ok(Self { m, n, bits: rows.concat() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, i: usize) -> bool {
        self.bits[j * self.n + i]
    }

    pub fn row(&self, j: usize) -> &[bool] {
        &self.bits[j * self.n..(j + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[bool]> {
        self.bits.chunks(self.n)
    }

    pub fn set_row(&mut self, j: usize, row: &[bool]) {
        self.bits[j * self.n..(j + 1) * self.n].copy_from_slice(row);
    }

    pub fn flipped(&self, j: usize, i: usize) -> Self {
        let mut out = self.clone();
        out.bits[j * self.n + i] ^= true;
        out
    }

    /// Number of entries where the two patterns differ.
    pub fn hamming(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    pub fn to_hex(&self) -> String {
        pack_hex(&self.bits)
    }

    pub fn from_hex(m: usize, n: usize, hex: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed pattern hex {hex:?}"));
        if hex.len() != (m * n).div_ceil(8) * 2 {
            return Err(bad());
        }
        let bytes: Vec<u8> = (0..hex.len() / 2)
            .map(|k| u8::from_str_radix(&hex[2 * k..2 * k + 2], 16).map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let bits = (0..m * n).map(|t| bytes[t / 8] & (0x80 >> (t % 8)) != 0).collect();
        Ok(Self { m, n, bits })
    }

    pub fn to_file(&self) -> PatternFile {
        PatternFile { m: self.m, n: self.n, bits: self.to_hex() }
    }
}

/// Serialized pattern `{m, n, bits}` with bits packed row-major, most
/// significant bit first, as lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFile {
    pub m: usize,
    pub n: usize,
    pub bits: String,
}

impl TryFrom<PatternFile> for ActivationPattern {
    type Error = Error;

    fn try_from(f: PatternFile) -> Result<Self> {
        ActivationPattern::from_hex(f.m, f.n, &f.bits)
    }
}

fn pack_hex(bits: &[bool]) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(8) * 2);
    for chunk in bits.chunks(8) {
        let byte = chunk.iter().enumerate().fold(0u8, |acc, (k, &b)| acc | (u8::from(b) << (7 - k)));
        write!(out, "{byte:02x}").expect("writing to a String");
    }
    out
}

/// Bit `(j, i)` is set iff `W_j . xbar_i > 0`.
pub fn pattern_of_weights(w: &DMatrix<f64>, dataset: &Dataset) -> ActivationPattern {
    let (m, n, p) = (w.nrows(), dataset.n(), dataset.p());
    debug_assert_eq!(w.ncols(), p);
    let mut out = ActivationPattern::zeros(m, n);
    for i in 0..n {
        let x = dataset.xbar_col(i);
        for j in 0..m {
            let h: f64 = (0..p).map(|k| w[(j, k)] * x[k]).sum();
            out.bits[j * n + i] = h > 0.0;
        }
    }
    out
}

/// Decides strict feasibility of `row` and returns a witness `w` with
/// `(2 a_i - 1) w^T xbar_i >= ||xbar_i||` on success.
pub fn row_feasible(row: &[bool], dataset: &Dataset) -> Result<Option<DVector<f64>>> {
    if row.len() != dataset.n() {
        return Err(Error::DimensionMismatch(format!("row has {} bits, dataset has {} examples", row.len(), dataset.n())));
    }
    let cols: Vec<&[f64]> = (0..dataset.n()).map(|i| dataset.xbar_col(i)).collect();
    feasible_on(&cols, row, dataset.use_bias())
}

fn feasible_on(cols: &[&[f64]], row: &[bool], use_bias: bool) -> Result<Option<DVector<f64>>> {
    let p = cols[0].len();
    if use_bias && (row.iter().all(|&b| b) || row.iter().all(|&b| !b)) {
        let mut w = DVector::zeros(p);
        w[p - 1] = if row[0] { 1.0 } else { -1.0 };
        return Ok(Some(w));
    }
    let mut normalized = Vec::with_capacity(cols.len());
    for (x, &a) in cols.iter().zip(row) {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(None);
        }
        let s = if a { 1.0 } else { -1.0 } / norm;
        normalized.push(x.iter().map(|v| s * v).collect::<Vec<f64>>());
    }
    // Farkas alternative: A w >= 1 is infeasible iff some lambda >= 0 with
    // A^T lambda = 0 and 1^T lambda = 1 exists. The LP below has value -1
    // in that case and 0 otherwise; its duals give w.
    let mut lp = LinearProgram::new();
    let lam = lp.add_vars(normalized.len(), VarBound::NonNeg, -1.0);
    let sigma = lp.add_var(VarBound::NonNeg, 0.0);
    for k in 0..p {
        lp.add_row(lam.clone().zip(&normalized).map(|(j, a)| (j, a[k])).collect(), RowSense::Eq, 0.0);
    }
    let mut total: Vec<(usize, f64)> = lam.clone().map(|j| (j, 1.0)).collect();
    total.push((sigma, 1.0));
    lp.add_row(total, RowSense::Eq, 1.0);
    let sol = lp.solve()?;
    if sol.objective < -0.5 {
        return Ok(None);
    }
    let w = DVector::from_iterator(p, sol.duals[..p].iter().map(|y| -y));
    if min_margin(&normalized, &w) >= 0.5 {
        return Ok(Some(w));
    }
    primal_feasible(&normalized)
}

fn min_margin(normalized: &[Vec<f64>], w: &DVector<f64>) -> f64 {
    normalized.iter().map(|a| a.iter().zip(w.iter()).map(|(x, y)| x * y).sum::<f64>()).fold(f64::INFINITY, f64::min)
}

fn primal_feasible(normalized: &[Vec<f64>]) -> Result<Option<DVector<f64>>> {
    let p = normalized[0].len();
    let mut lp = LinearProgram::new();
    let w = lp.add_vars(p, VarBound::Free, 0.0);
    for a in normalized {
        lp.add_row(w.clone().zip(a).map(|(k, v)| (k, *v)).collect(), RowSense::Ge, 1.0);
    }
    match lp.solve() {
        Ok(sol) => {
            let w = DVector::from_vec(sol.x);
            Ok((min_margin(normalized, &w) > 0.0).then_some(w))
        }
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Memoizes row feasibility for one dataset.
#[derive(Debug)]
pub struct FeasibilityCache<'a> {
    dataset: &'a Dataset,
    map: HashMap<Vec<bool>, Option<DVector<f64>>>,
    lp_solves: usize,
    complete: bool,
}

impl<'a> FeasibilityCache<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        Self { dataset, map: HashMap::new(), lp_solves: 0, complete: false }
    }

    /// A cache that already knows every chamber, so any other row is
    /// answered as infeasible without solving.
    pub fn with_chambers(dataset: &'a Dataset, chambers: &ChamberSet) -> Self {
        let map = chambers.patterns.iter().cloned().zip(chambers.witnesses.iter().cloned().map(Some)).collect();
        Self { dataset, map, lp_solves: 0, complete: true }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn lp_solves(&self) -> usize {
        self.lp_solves
    }

    pub fn insert(&mut self, row: &[bool], witness: DVector<f64>) {
        self.map.entry(row.to_vec()).or_insert(Some(witness));
    }

    pub fn witness(&mut self, row: &[bool]) -> Result<Option<DVector<f64>>> {
        if let Some(hit) = self.map.get(row) {
            return Ok(hit.clone());
        }
        if self.complete {
            return Ok(None);
        }
        self.lp_solves += 1;
        let result = row_feasible(row, self.dataset)?;
        self.map.insert(row.to_vec(), result.clone());
        Ok(result)
    }

    pub fn is_feasible(&mut self, row: &[bool]) -> Result<bool> {
        Ok(self.witness(row)?.is_some())
    }

    /// All one-bit flips of `pattern` whose flipped row stays feasible,
    /// in row-major `(unit, example)` order.
    pub fn neighbors(&mut self, pattern: &ActivationPattern) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        let mut row = Vec::with_capacity(pattern.n());
        for j in 0..pattern.m() {
            for i in 0..pattern.n() {
                row.clear();
                row.extend_from_slice(pattern.row(j));
                row[i] ^= true;
                if self.is_feasible(&row)? {
                    out.push((j, i));
                }
            }
        }
        Ok(out)
    }
}

/// Patterns one feasible bit flip away from `pattern`.
pub fn neighbors(pattern: &ActivationPattern, dataset: &Dataset) -> Result<Vec<ActivationPattern>> {
    let mut cache = FeasibilityCache::new(dataset);
    Ok(cache.neighbors(pattern)?.into_iter().map(|(j, i)| pattern.flipped(j, i)).collect())
}

/// Feasible single-unit rows with one strict witness each, sorted
/// lexicographically (`false < true`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChamberSet {
    pub patterns: Vec<Vec<bool>>,
    pub witnesses: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChamberEntry {
    #[serde(flatten)]
    pub pattern: PatternFile,
    pub witness: Vec<f64>,
}

impl ChamberSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn contains(&self, row: &[bool]) -> bool {
        self.patterns.binary_search_by(|p| p.as_slice().cmp(row)).is_ok()
    }

    pub fn entries(&self) -> Vec<ChamberEntry> {
        self.patterns
            .iter()
            .zip(&self.witnesses)
            .map(|(row, w)| ChamberEntry {
                pattern: PatternFile { m: 1, n: row.len(), bits: pack_hex(row) },
                witness: w.iter().copied().collect(),
            })
            .collect()
    }

}

pub const DEFAULT_CHAMBER_CAP: usize = 1_000_000;

/// Enumerates every chamber by inserting the example hyperplanes one at a
/// time. A surviving chamber whose witness already lies strictly on one
/// side of the new hyperplane keeps that side for free; the other side is
/// decided by a feasibility LP on the examples seen so far.
pub fn enumerate_chambers(dataset: &Dataset, cap: usize) -> Result<ChamberSet> {
    let n = dataset.n();
    let cols: Vec<&[f64]> = (0..n).map(|i| dataset.xbar_col(i)).collect();
    let mut current: Vec<(Vec<bool>, DVector<f64>)> = Vec::new();
    for bit in [false, true] {
        if let Some(w) = feasible_on(&cols[..1], &[bit], dataset.use_bias())? {
            current.push((vec![bit], w));
        }
    }
    for i in 1..n {
        let x = cols[i];
        let mut next = Vec::with_capacity(current.len() * 2);
        for (row, w) in current {
            let h: f64 = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let extend = |bit: bool, next: &mut Vec<(Vec<bool>, DVector<f64>)>| -> Result<()> {
                let mut r = row.clone();
                r.push(bit);
                let free = if bit { h > 0.0 } else { h < 0.0 };
                let witness = if free { Some(w.clone()) } else { feasible_on(&cols[..=i], &r, dataset.use_bias())? };
                if let Some(wit) = witness {
                    next.push((r, wit));
                }
                Ok(())
            };
            extend(false, &mut next)?;
            extend(true, &mut next)?;
            if next.len() > cap {
                return Err(Error::ComplexityRefused {
                    what: "chamber enumeration",
                    required: next.len() as u128,
                    cap: cap as u128,
                });
            }
        }
        current = next;
    }
    current.sort_by(|a, b| a.0.cmp(&b.0));
    let (patterns, witnesses) = current.into_iter().unzip();
    Ok(ChamberSet { patterns, witnesses })
}

/// Group label per unit: units share a group iff their output weights are
/// equal.
pub fn unit_groups(v: &[f64]) -> Vec<usize> {
    let mut seen: Vec<f64> = Vec::new();
    v.iter()
        .map(|&x| {
            seen.iter().position(|&s| s == x).unwrap_or_else(|| {
                seen.push(x);
                seen.len() - 1
            })
        })
        .collect()
}

/// Key identifying `pattern` up to permutations of units within a group.
/// Rows of each group are sorted and written back into that group's
/// positions before packing.
pub fn canonical_key(pattern: &ActivationPattern, groups: &[usize]) -> String {
    debug_assert_eq!(groups.len(), pattern.m());
    let mut canon = pattern.clone();
    let mut labels: Vec<usize> = groups.to_vec();
    labels.sort_unstable();
    labels.dedup();
    for g in labels {
        let positions: Vec<usize> = (0..pattern.m()).filter(|&j| groups[j] == g).collect();
        let mut rows: Vec<&[bool]> = positions.iter().map(|&j| pattern.row(j)).collect();
        rows.sort();
        for (&j, row) in positions.iter().zip(rows) {
            canon.set_row(j, row);
        }
    }
    canon.to_hex()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_appendix_d1, gen_synthetic};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect(), vec![0.0; xs.len()], true).unwrap()
    }

    fn gaussian(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        Dataset::new(rows, vec![0.0; n], true).unwrap()
    }

    fn brute_force(ds: &Dataset) -> Vec<Vec<bool>> {
        let mut rows: Vec<Vec<bool>> = (0..1u32 << ds.n())
            .map(|mask| (0..ds.n()).map(|i| mask & (1 << i) != 0).collect::<Vec<bool>>())
            .filter(|row| row_feasible(row, ds).unwrap().is_some())
            .collect();
        rows.sort();
        rows
    }

    #[test]
    fn pattern_of_weights_examples() {
        let ds = line(&[1.0, 2.0]);
        let zero = pattern_of_weights(&DMatrix::zeros(2, 2), &ds);
        assert!(zero.rows().all(|r| r.iter().all(|b| !b)));
        let p = pattern_of_weights(&DMatrix::from_row_slice(1, 2, &[1.0, -1.5]), &ds);
        assert_eq!(p.row(0), &[false, true]);
        let d1 = gen_appendix_d1(0.0).unwrap();
        let all = pattern_of_weights(&DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), &d1);
        assert_eq!(all.row(0), &[true; 5]);
    }

    #[test]
    fn row_feasibility_examples() {
        let ds = line(&[1.0, 2.0, 3.0]);
        assert_eq!(row_feasible(&[false; 3], &ds).unwrap().unwrap().as_slice(), &[0.0, -1.0]);
        assert!(row_feasible(&[true, false, true], &ds).unwrap().is_none());
        let two = line(&[1.0, 2.0]);
        let w = row_feasible(&[false, true], &two).unwrap().unwrap();
        assert_eq!(pattern_of_weights(&DMatrix::from_row_slice(1, 2, w.as_slice()), &two).row(0), &[false, true]);
    }

    #[test]
    fn zero_example_without_bias_is_never_strict() {
        let ds = Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.0; 2], false).unwrap();
        assert!(row_feasible(&[false, true], &ds).unwrap().is_none());
        assert!(enumerate_chambers(&ds, DEFAULT_CHAMBER_CAP).unwrap().is_empty());
    }

    #[test]
    fn chamber_counts() {
        assert_eq!(enumerate_chambers(&line(&[1.0, 2.0]), DEFAULT_CHAMBER_CAP).unwrap().len(), 4);
        assert_eq!(enumerate_chambers(&line(&[0.3]), DEFAULT_CHAMBER_CAP).unwrap().len(), 2);
        let fig = gaussian(5, 2, 1);
        let set = enumerate_chambers(&fig, DEFAULT_CHAMBER_CAP).unwrap();
        assert_eq!(set.len(), 22);
        assert_eq!(set.patterns, brute_force(&fig));
    }

    #[test]
    fn chamber_cap_is_enforced() {
        let ds = gaussian(8, 2, 3);
        assert!(matches!(enumerate_chambers(&ds, 10), Err(Error::ComplexityRefused { .. })));
    }

    #[test]
    fn witnesses_reproduce_their_patterns() {
        let ds = gen_synthetic(3, 2, 7);
        let set = enumerate_chambers(&ds, DEFAULT_CHAMBER_CAP).unwrap();
        for (row, w) in set.patterns.iter().zip(&set.witnesses) {
            let p = pattern_of_weights(&DMatrix::from_row_slice(1, ds.p(), w.as_slice()), &ds);
            assert_eq!(p.row(0), row.as_slice());
        }
        let entries = set.entries();
        assert_eq!(entries.len(), set.len());
        let json = serde_json::to_string(&entries[0]).unwrap();
        assert!(json.contains("\"bits\"") && json.contains("\"witness\""));
    }

    #[test]
    fn neighbors_of_inactive_row() {
        let ds = line(&[1.0, 2.0]);
        let p = ActivationPattern::from_rows(vec![vec![false, false]]).unwrap();
        let ns = neighbors(&p, &ds).unwrap();
        let rows: Vec<Vec<bool>> = ns.iter().map(|n| n.row(0).to_vec()).collect();
        assert_eq!(rows, vec![vec![true, false], vec![false, true]]);
        assert!(ns.iter().all(|n| n.hamming(&p) == 1));
    }

    #[test]
    fn neighbors_per_unit_are_independent() {
        let ds = line(&[1.0, 2.0]);
        let p = ActivationPattern::from_rows(vec![vec![false, false], vec![false, false]]).unwrap();
        let ns = neighbors(&p, &ds).unwrap();
        assert_eq!(ns.len(), 4);
        assert_eq!(ns.iter().filter(|n| n.row(1) == [false, false]).count(), 2);
    }

    #[test]
    fn canonical_keys() {
        let a = ActivationPattern::from_rows(vec![vec![true, false], vec![false, true]]).unwrap();
        let b = ActivationPattern::from_rows(vec![vec![false, true], vec![true, false]]).unwrap();
        assert_eq!(canonical_key(&a, &[0, 0]), canonical_key(&b, &[0, 0]));
        assert_ne!(canonical_key(&a, &[0, 1]), canonical_key(&b, &[0, 1]));
        let single = ActivationPattern::from_rows(vec![vec![true, false, true, true, false, false, false, false, true]]).unwrap();
        assert_eq!(canonical_key(&single, &[0]), "b080");
        assert_eq!(unit_groups(&[1.0, -1.0, 1.0, 0.5]), vec![0, 1, 0, 2]);
    }

    #[test]
    fn hex_round_trip() {
        let p = ActivationPattern::from_rows(vec![vec![true, false, true], vec![false, true, true]]).unwrap();
        let f = p.to_file();
        assert_eq!(f.bits, "ac");
        assert_eq!(ActivationPattern::try_from(f).unwrap(), p);
        assert!(ActivationPattern::from_hex(2, 3, "zz").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn enumeration_matches_brute_force(n in 1usize..=7, d in 1usize..=3, seed in 0u64..1000) {
            let ds = gaussian(n, d, seed);
            let set = enumerate_chambers(&ds, DEFAULT_CHAMBER_CAP).unwrap();
            prop_assert_eq!(set.patterns, brute_force(&ds));
        }

        #[test]
        fn random_weights_are_witnesses(seed in 0u64..1000, m in 1usize..4) {
            let ds = gaussian(6, 2, seed ^ 0x55);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = DMatrix::from_fn(m, ds.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let p = pattern_of_weights(&w, &ds);
            for row in p.rows() {
                prop_assert!(row_feasible(row, &ds).unwrap().is_some());
            }
            prop_assert_eq!(pattern_of_weights(&(w * 3.5), &ds), p);
        }
    }
}
