//! IDX archives and the two-class PCA-whitened tasks built from them.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

const UNSIGNED_BYTE: u8 = 0x08;

/// A decoded IDX tensor of unsigned bytes in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!("dims hold {expected} elements, data has {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// IDX file bytes for this tensor.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![0, 0, UNSIGNED_BYTE, self.dims.len() as u8];
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedPayload { expected: 4, found: bytes.len() });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 || bytes[3] == 0 {
        return Err(Error::BadMagic(magic));
    }
    if bytes[2] != UNSIGNED_BYTE {
        return Err(Error::UnsupportedElementType(bytes[2]));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::TruncatedPayload { expected: header, found: bytes.len() });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(Error::BadMagic(magic))?;
    let payload = &bytes[header..];
    if payload.len() < count {
        return Err(Error::TruncatedPayload { expected: count, found: payload.len() });
    }
    Ok(IdxTensor { dims, data: payload[..count].to_vec() })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    parse_idx(&std::fs::read(path)?)
}

/// Principal components of a row-per-example matrix, largest variance
/// first. Each component is signed so its largest-magnitude loading is
/// positive.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// One orthonormal component per row.
    pub components: DMatrix<f64>,
    /// Standard deviation of the data along each component.
    pub std: DVector<f64>,
}

impl Pca {
    pub fn fit(data: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, dim) = data.shape();
        if n == 0 || k == 0 || k > dim {
            return Err(Error::InvalidArgument(format!("cannot take {k} components of {n} examples in {dim} dimensions")));
        }
        let mean = data.row_mean().transpose();
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.tr_mul(&centered) / n as f64;
        let eig = cov.symmetric_eigen();
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = DMatrix::zeros(k, dim);
        let mut std = DVector::zeros(k);
        for (r, &c) in idx.iter().take(k).enumerate() {
            let mut u = eig.eigenvectors.column(c).into_owned();
            let lead = u.iter().copied().enumerate().fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, x) } else { best });
            if u[lead.0] < 0.0 {
                u = -u;
            }
            components.set_row(r, &u.transpose());
            std[r] = eig.eigenvalues[c].max(0.0).sqrt();
        }
        Ok(Self { mean, components, std })
    }

    /// Coordinates of `x` along the components.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.components * (x - &self.mean)
    }

    pub fn reconstruct(&self, scores: &DVector<f64>) -> DVector<f64> {
        self.components.tr_mul(scores) + &self.mean
    }

    /// Projection scaled to unit variance per component.
    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        self.project(x).component_div(&self.std)
    }
}

/// Pixels of image `i` scaled to `[0, 1]`.
fn pixels(images: &IdxTensor, i: usize, size: usize) -> impl Iterator<Item = f64> + '_ {
    images.data[i * size..(i + 1) * size].iter().map(|&b| b as f64 / 255.0)
}

/// Binary task from an image archive: keeps the examples labeled `class_a`
/// (label 0) or `class_b` (label 1), whitens them onto the top `pca_dims`
/// principal components fitted on every kept example, and returns the first
/// `n` in file order.
pub fn build_binary_task(
    images: &IdxTensor,
    labels: &IdxTensor,
    class_a: u8,
    class_b: u8,
    pca_dims: usize,
    n: usize,
) -> Result<Dataset> {
    if labels.rank() != 1 || images.rank() != 3 || images.dims[0] != labels.dims[0] {
        return Err(Error::DimensionMismatch(format!(
            "need rank-3 images and rank-1 labels of equal length, got {:?} and {:?}",
            images.dims, labels.dims
        )));
    }
    if class_a == class_b || pca_dims == 0 || n == 0 {
        return Err(Error::InvalidArgument("need two distinct classes, pca_dims > 0 and n > 0".into()));
    }
    let size = images.dims[1] * images.dims[2];
    let kept: Vec<usize> = (0..labels.dims[0]).filter(|&i| labels.data[i] == class_a || labels.data[i] == class_b).collect();
    if kept.len() < n {
        return Err(Error::NotEnoughExamples { found: kept.len(), requested: n });
    }
    let data = DMatrix::from_row_iterator(kept.len(), size, kept.iter().flat_map(|&i| pixels(images, i, size)));
    let pca = Pca::fit(&data, pca_dims)?;
    if pca.std.iter().any(|&s| s <= 1e-12 * pca.std[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidArgument(format!("fewer than {pca_dims} components have nonzero variance")));
    }
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (r, &i) in kept.iter().take(n).enumerate() {
        rows.push(pca.whiten(&data.row(r).transpose()).iter().copied().collect());
        y.push(if labels.data[i] == class_b { 1.0 } else { 0.0 });
    }
    Dataset::new(rows, y, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decodes_rank_one_and_three() {
        let t = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 5, 0, 4]).unwrap();
        assert_eq!(t, IdxTensor { dims: vec![3], data: vec![5, 0, 4] });
        let mut bytes = vec![0, 0, 8, 3];
        for _ in 0..3 {
            bytes.extend_from_slice(&2u32.to_be_bytes());
        }
        bytes.extend(0..8u8);
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![2, 2, 2]);
        assert_eq!(t.encode(), bytes);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 5]), Err(Error::TruncatedPayload { expected: 3, found: 1 })));
        assert!(matches!(parse_idx(&[1, 0, 8, 1]), Err(Error::BadMagic(_))));
        assert!(matches!(parse_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 0]), Err(Error::UnsupportedElementType(0x0d))));
        assert!(matches!(parse_idx(&[0, 0, 8, 2, 0, 0]), Err(Error::TruncatedPayload { .. })));
    }

    fn archive(count: usize, seed: u64) -> (IdxTensor, IdxTensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..count).map(|_| rng.random_range(0..3)).collect();
        let mut pixels = Vec::with_capacity(count * 16);
        for &l in &labels {
            for k in 0..16 {
                let base = if (k + l as usize) % 3 == 0 { 180.0 } else { 40.0 };
                pixels.push((base + rng.random_range(-40.0..40.0)) as u8);
            }
        }
        (IdxTensor::new(vec![count, 4, 4], pixels).unwrap(), IdxTensor::new(vec![count], labels).unwrap())
    }

    #[test]
    fn whitened_task_has_unit_variance_on_fit_set() {
        let (images, labels) = archive(300, 1);
        let kept = labels.data.iter().filter(|&&l| l != 2).count();
        let ds = build_binary_task(&images, &labels, 0, 1, 5, kept).unwrap();
        assert_eq!((ds.n(), ds.d()), (kept, 5));
        for k in 0..5 {
            let col: Vec<f64> = ds.rows().map(|r| r[k]).collect();
            let mean = col.iter().sum::<f64>() / kept as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / kept as f64;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6, "{mean} {var}");
        }
        let labels_in: Vec<u8> = labels.data.iter().copied().filter(|&l| l != 2).collect();
        for (y, l) in ds.labels().iter().zip(labels_in) {
            assert_eq!(*y, f64::from(l));
        }
        let again = build_binary_task(&images, &labels, 0, 1, 5, 20).unwrap();
        assert_eq!(again.to_json(), build_binary_task(&images, &labels, 0, 1, 5, 20).unwrap().to_json());
        assert!(matches!(build_binary_task(&images, &labels, 0, 1, 5, kept + 1), Err(Error::NotEnoughExamples { .. })));
    }

    #[test]
    fn components_are_orthonormal_and_reconstruct() {
        let (images, _) = archive(80, 2);
        let data = DMatrix::from_row_iterator(80, 16, images.data.iter().map(|&b| b as f64 / 255.0));
        let pca = Pca::fit(&data, 16).unwrap();
        let gram = &pca.components * pca.components.transpose();
        assert!((gram - DMatrix::identity(16, 16)).amax() < 1e-8);
        for r in 0..50 {
            let x = data.row(r).transpose();
            assert!((pca.reconstruct(&pca.project(&x)) - &x).amax() < 1e-4);
        }
        assert!(pca.std.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn reads_from_disk() {
        let (images, _) = archive(4, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("images.idx");
        std::fs::write(&path, images.encode()).unwrap();
        assert_eq!(read_idx(&path).unwrap(), images);
    }
}
