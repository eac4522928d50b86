use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::ShallowReluNet;

/// How [`chunked_fit`] split and separated the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlan {
    /// Example indices sorted by their last coordinate.
    pub order: Vec<usize>,
    /// Half-open ranges into `order`.
    pub chunk_bounds: Vec<(usize, usize)>,
    /// Separator threshold on the last coordinate for each chunk.
    pub alphas: Vec<f64>,
    /// Largest absolute residual over chunks `1..=k` after fitting chunk `k`.
    pub stage_residuals: Vec<f64>,
}

/// Interpolates the training set with `2 * ceil(n / (d + 1))` units.
///
/// Examples are sorted by their last coordinate and cut into chunks of
/// `d + 1`. Chunk `k` gets a pair of units whose difference is the linear
/// interpolant of the current residuals on that chunk, gated by a direction
/// that is negative on every earlier chunk so earlier fits are untouched.
pub fn chunked_fit(dataset: &Dataset) -> Result<(ShallowReluNet, ChunkPlan)> {
    if !dataset.use_bias() {
        return Err(Error::InvalidArgument("chunked fit needs a bias coordinate".into()));
    }
    let (n, d, p) = (dataset.n(), dataset.d(), dataset.p());
    if n == 0 {
        return Err(Error::InvalidDataset("empty dataset".into()));
    }
    let last = |i: usize| dataset.example(i)[d - 1];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| last(a).total_cmp(&last(b)));
    let chunk_bounds: Vec<(usize, usize)> = (0..n).step_by(d + 1).map(|s| (s, (s + d + 1).min(n))).collect();
    let xbar = |i: usize| DVector::from_column_slice(dataset.xbar_col(i));

    let mut alphas = Vec::with_capacity(chunk_bounds.len());
    let mut stage_residuals = Vec::with_capacity(chunk_bounds.len());
    let mut units: Vec<(DVector<f64>, f64)> = Vec::new();
    let y = dataset.labels();
    let predict = |units: &[(DVector<f64>, f64)], i: usize| -> f64 {
        let x = xbar(i);
        units.iter().map(|(w, v)| v * w.dot(&x).max(0.0)).sum()
    };

    for &(start, end) in &chunk_bounds {
        let lo = last(order[start]);
        let alpha = if start == 0 {
            lo - 1.0
        } else {
            let prev = last(order[start - 1]);
            if prev == lo {
                return Err(Error::BoundaryTie { value: lo });
            }
            0.5 * (prev + lo)
        };
        alphas.push(alpha);

        let mut u = DVector::zeros(p);
        u[d - 1] = 1.0;
        u[d] = -alpha;
        let min_abs = order[..end].iter().map(|&i| u.dot(&xbar(i)).abs()).fold(f64::INFINITY, f64::min);
        let u_tilde = u * ((1.0 + 1e-3) / min_abs);

        let chunk = &order[start..end];
        let a = DMatrix::from_fn(chunk.len(), p, |r, k| dataset.xbar_col(chunk[r])[k]);
        let residual = DVector::from_iterator(chunk.len(), chunk.iter().map(|&i| y[i] - predict(&units, i)));
        let svd = a.svd(true, true);
        let tol = 1e-10 * svd.singular_values.max();
        if svd.rank(tol) < chunk.len() {
            return Err(Error::NotGeneralPosition(format!("chunk starting at sorted position {start} is affinely dependent")));
        }
        let w = svd.solve(&residual, tol).map_err(|e| Error::InvalidArgument(e.to_string()))?;

        let earlier = order[..start].iter().map(|&i| w.dot(&xbar(i)).max(0.0));
        let later = order[start..].iter().map(|&i| (-w.dot(&xbar(i))).max(0.0));
        let beta = earlier.chain(later).fold(0.0, f64::max);
        units.push((&w + beta * &u_tilde, 1.0));
        units.push((beta * u_tilde, -1.0));

        let worst = order[..end].iter().map(|&i| (y[i] - predict(&units, i)).abs()).fold(0.0, f64::max);
        stage_residuals.push(worst);
    }

    let m = units.len();
    let w = DMatrix::from_fn(m, p, |j, k| units[j].0[k]);
    let v = DVector::from_iterator(m, units.iter().map(|u| u.1));
    let net = ShallowReluNet::new(w, v, 0.0, true)?;
    Ok((net, ChunkPlan { order, chunk_bounds, alphas, stage_residuals }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn max_residual(net: &ShallowReluNet, ds: &Dataset) -> f64 {
        net.predictions(ds).iter().zip(ds.labels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn single_chunk() {
        let ds = Dataset::new(vec![vec![0.0, 1.0], vec![1.0, 2.0], vec![-1.0, 0.5]], vec![1.0, -2.0, 3.0], true).unwrap();
        let (net, plan) = chunked_fit(&ds).unwrap();
        assert_eq!(net.m(), 2);
        assert_eq!(plan.alphas, vec![-0.5]);
        assert!(max_residual(&net, &ds) < 1e-10);
    }

    #[test]
    fn two_chunks_fit_exactly() {
        let ds = gen_synthetic(4, 2, 0);
        let (net, plan) = chunked_fit(&ds).unwrap();
        assert_eq!(net.m(), 4);
        assert_eq!(plan.chunk_bounds, vec![(0, 5), (5, 10)]);
        assert!(max_residual(&net, &ds) < 1e-6);
        assert!(plan.stage_residuals.iter().all(|&r| r < 1e-6));
    }

    #[test]
    fn pairs_are_silent_on_earlier_chunks() {
        let ds = gen_synthetic(2, 4, 3);
        let (net, plan) = chunked_fit(&ds).unwrap();
        assert_eq!(net.m(), 2 * plan.chunk_bounds.len());
        for (k, &(start, _)) in plan.chunk_bounds.iter().enumerate() {
            for pos in 0..ds.n() {
                let x = ds.xbar_col(plan.order[pos]);
                for j in [2 * k, 2 * k + 1] {
                    let h: f64 = (0..ds.p()).map(|c| net.w()[(j, c)] * x[c]).sum();
                    if pos < start {
                        assert!(h <= 1e-9, "unit {j} fires on earlier example");
                    } else {
                        assert!(h >= -1e-9, "unit {j} silent on later example");
                    }
                }
            }
        }
    }

    #[test]
    fn ragged_final_chunk() {
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![(i as f64 * 1.3).sin(), i as f64]).collect();
        let y: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        let ds = Dataset::new(rows, y, true).unwrap();
        let (net, plan) = chunked_fit(&ds).unwrap();
        assert_eq!(net.m(), 6);
        assert_eq!(plan.chunk_bounds.last(), Some(&(6, 7)));
        assert!(max_residual(&net, &ds) < 1e-6);
    }

    #[test]
    fn errors() {
        let tie = Dataset::new(vec![vec![0.0], vec![1.0], vec![1.0]], vec![0.0; 3], true).unwrap();
        assert!(matches!(chunked_fit(&tie), Err(Error::BoundaryTie { .. })));
        let collinear = Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]], vec![0.0; 3], true).unwrap();
        assert!(matches!(chunked_fit(&collinear), Err(Error::NotGeneralPosition(_))));
        assert!(chunked_fit(&tie.with_use_bias(false)).is_err());
    }
}
