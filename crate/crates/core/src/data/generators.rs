use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::network::ShallowReluNet;
use crate::rng::{self, Stream};

/// Teacher-labeled Gaussian data: `n = (d + 1) * m_gen` standard normal
/// examples labeled by a random shallow network with `m_gen` units.
pub fn gen_synthetic(d: usize, m_gen: usize, seed: u64) -> Dataset {
    gen_synthetic_with_teacher(d, m_gen, seed).0
}

/// Same as [`gen_synthetic`], also returning the labeling network.
pub fn gen_synthetic_with_teacher(d: usize, m_gen: usize, seed: u64) -> (Dataset, ShallowReluNet) {
    assert!(d >= 1 && m_gen >= 1, "d and m_gen must be positive");
    let n = (d + 1) * m_gen;
    let mut rng = rng::stream(seed, Stream::Data);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let x: Vec<f64> = (0..n * d).map(|_| normal()).collect();
    let w = DMatrix::from_row_iterator(m_gen, d + 1, (0..m_gen * (d + 1)).map(|_| normal()));
    let v = DVector::from_iterator(m_gen, (0..m_gen).map(|_| normal()));
    let c = normal();
    let teacher = ShallowReluNet::new(w, v, c, true).expect("consistent shapes");
    let y = x.chunks(d).map(|row| teacher.forward(row)).collect();
    let ds = Dataset::from_flat(n, d, x, y, true).expect("finite gaussian data");
    (ds, teacher)
}

/// Five collinear examples in `R^2` whose optimal single-unit L1 loss jumps
/// from 0.1 to 0 when example 3 is lifted off the line by `epsilon`.
pub fn gen_appendix_d1(epsilon: f64) -> Result<Dataset> {
    check_epsilon(epsilon)?;
    let rows = (1..=5)
        .map(|i| vec![i as f64, if i == 3 { epsilon } else { 0.0 }])
        .collect();
    Dataset::new(rows, vec![1.0, 2.0, 2.5, 4.0, 5.0], true)
}

/// Four coplanar examples in `R^3` (no bias) whose optimal single-unit L1
/// loss drops from 1.25 to 0.625 when example 2 is lifted by `epsilon`.
pub fn gen_appendix_d2(epsilon: f64) -> Result<Dataset> {
    check_epsilon(epsilon)?;
    let rows = vec![
        vec![-1.0, 0.0, 0.0],
        vec![2.0, 1.0, epsilon],
        vec![-1.0, 1.0, 0.0],
        vec![-1.0, -1.0, 0.0],
    ];
    Dataset::new(rows, vec![4.0, 3.0, 2.0, 1.0], false)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be nonnegative, got {epsilon}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_sizes() {
        assert_eq!(gen_synthetic(4, 2, 0).n(), 10);
        let ds = gen_synthetic(8, 8, 3);
        assert_eq!((ds.n(), ds.d(), ds.use_bias()), (72, 8, true));
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(gen_synthetic(3, 2, 42), gen_synthetic(3, 2, 42));
        assert_ne!(gen_synthetic(3, 2, 42), gen_synthetic(3, 2, 43));
    }

    #[test]
    fn teacher_reproduces_labels() {
        let (ds, teacher) = gen_synthetic_with_teacher(4, 2, 9);
        for (i, row) in ds.rows().enumerate() {
            assert_eq!(teacher.forward(row), ds.labels()[i]);
        }
    }

    #[test]
    fn d1_layout() {
        let ds = gen_appendix_d1(0.0).unwrap();
        assert_eq!(ds.labels(), &[1.0, 2.0, 2.5, 4.0, 5.0]);
        assert!(ds.use_bias());
        let lifted = gen_appendix_d1(0.01).unwrap();
        assert_eq!(lifted.example(2), &[3.0, 0.01]);
        assert!(gen_appendix_d1(-1.0).is_err());
    }

    #[test]
    fn d2_layout() {
        let ds = gen_appendix_d2(0.0).unwrap();
        assert_eq!(ds.labels(), &[4.0, 3.0, 2.0, 1.0]);
        assert!(!ds.use_bias());
        assert!(ds.rows().all(|r| r[2] == 0.0));
        let x = ds.xbar();
        assert_eq!(x.column(0).as_slice(), &[-1.0, 0.0, 0.0]);
        assert_eq!(x.column(1).as_slice(), &[2.0, 1.0, 0.0]);
        let lifted = gen_appendix_d2(0.1).unwrap();
        assert_eq!(lifted.example(1), &[2.0, 1.0, 0.1]);
    }
}
