//! Set-cover instances and the single-ReLU training sets that encode them.
//!
//! Coordinates of the generated examples: index 0 is the `gamma` constraint
//! coordinate, index 1 the unit constraint coordinate, and index `2 + i` the
//! coordinate of subset `T_i`. Examples are emitted in the order
//! `x_gamma, x_1, x_{T_1}, ..., x_{T_M}, x_{u_1}, ..., x_{u_|U|}`.

use itertools::Itertools;
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const DEFAULT_MAX_DIMENSION: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetCoverInstance {
    /// Size of the universe `{1, ..., universe}`.
    pub universe: usize,
    /// Subsets of the universe, elements 1-based.
    pub subsets: Vec<Vec<usize>>,
    /// Target cover size.
    pub t: usize,
}

impl SetCoverInstance {
    pub fn new(universe: usize, subsets: Vec<Vec<usize>>, t: usize) -> Result<Self> {
        let inst = Self { universe, subsets, t };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.universe == 0 {
            return Err(Error::InvalidInstance("empty universe".into()));
        }
        if self.subsets.is_empty() {
            return Err(Error::InvalidInstance("no subsets".into()));
        }
        if self.t == 0 {
            return Err(Error::InvalidInstance("t must be positive".into()));
        }
        for (i, s) in self.subsets.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidInstance(format!("subset {} is empty", i + 1)));
            }
            if let Some(&e) = s.iter().find(|&&e| e == 0 || e > self.universe) {
                return Err(Error::InvalidInstance(format!("subset {} has element {e} outside 1..={}", i + 1, self.universe)));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.subsets.len()
    }

    pub fn gamma(&self) -> f64 {
        0.01 / (self.m() * self.m()) as f64
    }

    /// Whether the subsets with the given 0-based indices cover the universe.
    pub fn is_cover(&self, chosen: &[usize]) -> bool {
        (1..=self.universe).all(|u| chosen.iter().any(|&i| self.subsets[i].contains(&u)))
    }

    /// Smallest cover found by exhaustive search over all subcollections.
    pub fn min_cover(&self) -> Option<Vec<usize>> {
        (0..=self.m()).find_map(|size| (0..self.m()).combinations(size).find(|c| self.is_cover(c)))
    }

    pub fn has_cover_of_size(&self, t: usize) -> bool {
        self.min_cover().is_some_and(|c| c.len() <= t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetCoverVariant {
    /// The reduction exactly as constructed (not in general position).
    Degenerate,
    /// Every `x_u` shifted by `epsilon` along the first subset's coordinate.
    AdversarialPerturbed,
    /// Every `x_u` shifted by `-eta_u`, `eta_u` uniform on `[delta1, delta2]^d`.
    GeneralPosition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetCoverDatasetOptions {
    pub variant: SetCoverVariant,
    pub delta1: f64,
    pub delta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub max_dimension: usize,
}

impl SetCoverDatasetOptions {
    pub fn degenerate() -> Self {
        Self {
            variant: SetCoverVariant::Degenerate,
            delta1: 0.0,
            delta2: 0.0,
            epsilon: 0.0,
            seed: 0,
            max_dimension: DEFAULT_MAX_DIMENSION,
        }
    }

    pub fn general_position(delta1: f64, delta2: f64, seed: u64) -> Self {
        Self { variant: SetCoverVariant::GeneralPosition, delta1, delta2, seed, ..Self::degenerate() }
    }

    pub fn adversarial(epsilon: f64) -> Self {
        Self { variant: SetCoverVariant::AdversarialPerturbed, epsilon, ..Self::degenerate() }
    }
}

/// Builds the bias-free training set encoding `instance`.
pub fn gen_set_cover_dataset(instance: &SetCoverInstance, opts: &SetCoverDatasetOptions) -> Result<Dataset> {
    instance.validate()?;
    let m = instance.m();
    let d = m + 2;
    if d > opts.max_dimension {
        return Err(Error::ComplexityRefused {
            what: "set-cover dataset dimension",
            required: d as u128,
            cap: opts.max_dimension as u128,
        });
    }
    let gamma = instance.gamma();
    let unit = |k: usize| {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        e
    };
    let mut rows = vec![unit(0), unit(1)];
    let mut y = vec![gamma, 1.0];
    for i in 0..m {
        let mut x = unit(0);
        x[2 + i] = 1.0;
        rows.push(x);
        y.push(gamma);
    }
    let mut element_rows: Vec<Vec<f64>> = (1..=instance.universe)
        .map(|u| {
            let mut x = unit(1);
            for (i, s) in instance.subsets.iter().enumerate() {
                if s.contains(&u) {
                    x[2 + i] = 1.0;
                }
            }
            x
        })
        .collect();
    match opts.variant {
        SetCoverVariant::Degenerate => {}
        SetCoverVariant::GeneralPosition => {
            let bound = 1.0 / (2.0 * d as f64);
            if !(0.0 < opts.delta1 && opts.delta1 < opts.delta2 && opts.delta2 < bound) {
                return Err(Error::InvalidDeltas { delta1: opts.delta1, delta2: opts.delta2, bound });
            }
            let noise = Uniform::new_inclusive(opts.delta1, opts.delta2).expect("ordered deltas");
            let mut rng = rng::stream(opts.seed, Stream::Data);
            for x in &mut element_rows {
                x.iter_mut().for_each(|v| *v -= rng.sample(noise));
            }
        }
        SetCoverVariant::AdversarialPerturbed => {
            if !(opts.epsilon > 0.0) {
                return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", opts.epsilon)));
            }
            for x in &mut element_rows {
                x[2] += opts.epsilon;
            }
        }
    }
    y.extend(std::iter::repeat_n(0.0, element_rows.len()));
    rows.extend(element_rows);
    Dataset::new(rows, y, false)
}

/// Weight vector realizing the loss bound attached to each variant: with a
/// cover `chosen` (0-based subset indices), `w_gamma = gamma`, `w_1 = 1` and
/// `w_T = -1` (degenerate) or `-2` (general position) on the cover. For the
/// adversarial variant the cover is ignored and `w_{T_1} = -1/epsilon`.
pub fn reference_weights(instance: &SetCoverInstance, opts: &SetCoverDatasetOptions, chosen: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; instance.m() + 2];
    w[0] = instance.gamma();
    w[1] = 1.0;
    match opts.variant {
        SetCoverVariant::Degenerate => chosen.iter().for_each(|&i| w[2 + i] = -1.0),
        SetCoverVariant::GeneralPosition => chosen.iter().for_each(|&i| w[2 + i] = -2.0),
        SetCoverVariant::AdversarialPerturbed => w[2] = -1.0 / opts.epsilon,
    }
    w
}
