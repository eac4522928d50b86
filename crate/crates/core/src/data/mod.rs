//! Datasets, homogenization, perturbations and the dataset constructions
//! used throughout the toolkit.

mod general_position;
mod generators;
mod set_cover;

pub use general_position::{is_general_position, GeneralPositionOptions, GeneralPositionReport, SubsetMode};
pub use generators::{gen_appendix_d1, gen_appendix_d2, gen_synthetic, gen_synthetic_with_teacher};
pub use set_cover::{
    gen_set_cover_dataset, reference_weights, SetCoverDatasetOptions, SetCoverInstance, SetCoverVariant,
    DEFAULT_MAX_DIMENSION,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const DATASET_SCHEMA: &str = "relu-zono-dataset/1";

/// A labeled dataset: `n` examples in `R^d` plus real labels.
///
/// When `use_bias` is set, weight vectors act on homogenized examples
/// `(x, 1)` of length `d + 1`; otherwise they act on the raw `d`
/// coordinates. The homogenized matrix is computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    use_bias: bool,
    xbar: DMatrix<f64>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<f64>, use_bias: bool) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidDataset("ragged example rows".into()));
        }
        Self::from_flat(n, d, rows.into_iter().flatten().collect(), y, use_bias)
    }

    /// Builds a dataset from a row-major `n x d` buffer.
    pub fn from_flat(n: usize, d: usize, x: Vec<f64>, y: Vec<f64>, use_bias: bool) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidDataset(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
        }
        if x.len() != n * d {
            return Err(Error::InvalidDataset(format!("expected {} coordinates, got {}", n * d, x.len())));
        }
        if y.len() != n {
            return Err(Error::InvalidDataset(format!("expected {n} labels, got {}", y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        let p = if use_bias { d + 1 } else { d };
        let xbar = DMatrix::from_fn(p, n, |k, i| if k < d { x[i * d + k] } else { 1.0 });
        Ok(Self { n, d, x, y, use_bias, xbar })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Length of the weight vectors acting on this dataset.
    pub fn p(&self) -> usize {
        if self.use_bias {
            self.d + 1
        } else {
            self.d
        }
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    pub fn example(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks(self.d)
    }

    /// Homogenized examples as columns (`p x n`).
    pub fn xbar(&self) -> &DMatrix<f64> {
        &self.xbar
    }

    /// Homogenized example `i` as a contiguous slice of length `p`.
    pub fn xbar_col(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.xbar.as_slice()[i * p..(i + 1) * p]
    }

    pub fn with_labels(&self, y: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.n, self.d, self.x.clone(), y, self.use_bias)
    }

    pub fn with_use_bias(&self, use_bias: bool) -> Self {
        Self::from_flat(self.n, self.d, self.x.clone(), self.y.clone(), use_bias)
            .expect("already validated")
    }

    /// Keeps the examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let x = indices.iter().flat_map(|&i| self.example(i).iter().copied()).collect();
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Self::from_flat(indices.len(), self.d, x, y, self.use_bias)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DatasetFile::from(self)).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// Returns the homogenized examples as columns: `(d+1) x n` when the
/// dataset uses a bias, the transposed example matrix otherwise.
pub fn homogenize(dataset: &Dataset) -> DMatrix<f64> {
    dataset.xbar().clone()
}

/// On-disk representation of a [`Dataset`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema: String,
    pub d: usize,
    pub n: usize,
    pub use_bias: bool,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl From<&Dataset> for DatasetFile {
    fn from(ds: &Dataset) -> Self {
        Self {
            schema: DATASET_SCHEMA.to_string(),
            d: ds.d,
            n: ds.n,
            use_bias: ds.use_bias,
            x: ds.rows().map(<[f64]>::to_vec).collect(),
            y: ds.y.clone(),
        }
    }
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = Error;

    fn try_from(file: DatasetFile) -> Result<Self> {
        if file.schema != DATASET_SCHEMA {
            return Err(Error::InvalidDataset(format!("unknown schema {:?}", file.schema)));
        }
        if file.x.len() != file.n || file.x.iter().any(|r| r.len() != file.d) {
            return Err(Error::InvalidDataset("x does not match declared n and d".into()));
        }
        Dataset::new(file.x, file.y, file.use_bias)
    }
}

/// Bound on the per-example displacement used by [`perturb`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    epsilon: f64,
    seed: u64,
}

impl PerturbationSpec {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, seed })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Moves every example by an independent draw from the uniform
/// distribution on the Euclidean ball of radius `epsilon`. Labels are kept.
pub fn perturb(dataset: &Dataset, spec: &PerturbationSpec) -> Dataset {
    let mut rng = rng::stream(spec.seed, Stream::Data);
    let d = dataset.d;
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    let mut x = dataset.x.clone();
    for row in x.chunks_mut(d) {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = spec.epsilon * rng.sample(unit).powf(1.0 / d as f64);
        if norm > 0.0 {
            dir.iter_mut().for_each(|v| *v *= radius / norm);
        }
        row.iter_mut().zip(&dir).for_each(|(a, b)| *a += b);
    }
    Dataset::from_flat(dataset.n, d, x, dataset.y.clone(), dataset.use_bias).expect("finite perturbation")
}
