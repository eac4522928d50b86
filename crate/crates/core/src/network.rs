//! Shallow ReLU networks `x -> v^T relu(W xbar) + c`, their losses, and the
//! full-batch gradient-descent baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    L1,
    Logistic,
}

impl LossKind {
    /// Per-example loss of prediction `yhat` against label `y`.
    pub fn eval(self, yhat: f64, y: f64) -> f64 {
        match self {
            LossKind::Mse => (yhat - y) * (yhat - y),
            LossKind::L1 => (yhat - y).abs(),
            LossKind::Logistic => softplus(yhat) - y * yhat,
        }
    }

    /// Derivative of [`LossKind::eval`] in `yhat` (0 at the kink of L1).
    pub fn derivative(self, yhat: f64, y: f64) -> f64 {
        match self {
            LossKind::Mse => 2.0 * (yhat - y),
            LossKind::L1 => {
                let r = yhat - y;
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Logistic => sigmoid(yhat) - y,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::L1 => "l1",
            LossKind::Logistic => "logistic",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "l1" => Ok(LossKind::L1),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The first layer acts on homogenized inputs when `use_bias` is set, so
/// `W` has `d + 1` columns in that case.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowReluNet {
    w: DMatrix<f64>,
    v: DVector<f64>,
    c: f64,
    use_bias: bool,
}

impl ShallowReluNet {
    pub fn new(w: DMatrix<f64>, v: DVector<f64>, c: f64, use_bias: bool) -> Result<Self> {
        if w.nrows() != v.len() {
            return Err(Error::DimensionMismatch(format!("W has {} rows but v has {} entries", w.nrows(), v.len())));
        }
        if w.nrows() == 0 || w.ncols() == 0 || (use_bias && w.ncols() < 2) {
            return Err(Error::DimensionMismatch(format!("W has shape {}x{}", w.nrows(), w.ncols())));
        }
        if w.iter().chain(v.iter()).any(|x| !x.is_finite()) || !c.is_finite() {
            return Err(Error::InvalidArgument("non-finite network parameter".into()));
        }
        Ok(Self { w, v, c, use_bias })
    }

    /// One unit with output weight 1 and no output bias.
    pub fn single_unit(w: &[f64], use_bias: bool) -> Self {
        Self::new(DMatrix::from_row_slice(1, w.len(), w), DVector::from_element(1, 1.0), 0.0, use_bias)
            .expect("valid single unit")
    }

    pub fn m(&self) -> usize {
        self.w.nrows()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    /// Input dimension `d`.
    pub fn input_dim(&self) -> usize {
        if self.use_bias {
            self.p() - 1
        } else {
            self.p()
        }
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    /// Output on a raw example of length `d`.
    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut out = self.c;
        for j in 0..self.m() {
            let mut h = 0.0;
            for (k, xk) in x.iter().enumerate() {
                h += self.w[(j, k)] * xk;
            }
            if self.use_bias {
                h += self.w[(j, self.p() - 1)];
            }
            out += self.v[j] * h.max(0.0);
        }
        out
    }

    /// Output on an already homogenized example of length `p`.
    pub fn forward_homogeneous(&self, xbar: &[f64]) -> f64 {
        let mut out = self.c;
        for j in 0..self.m() {
            let h: f64 = xbar.iter().enumerate().map(|(k, x)| self.w[(j, k)] * x).sum();
            out += self.v[j] * h.max(0.0);
        }
        out
    }

    pub fn predictions(&self, dataset: &Dataset) -> Vec<f64> {
        (0..dataset.n()).map(|i| self.forward_homogeneous(dataset.xbar_col(i))).collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            m: self.m(),
            p: self.p(),
            w: self.w.row_iter().map(|r| r.iter().copied().collect()).collect(),
            v: self.v.iter().copied().collect(),
            c: self.c,
            use_bias: self.use_bias,
        }
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.p() != self.p() || dataset.use_bias() != self.use_bias {
            return Err(Error::DimensionMismatch(format!(
                "network expects p={} (bias {}), dataset has p={} (bias {})",
                self.p(),
                self.use_bias,
                dataset.p(),
                dataset.use_bias()
            )));
        }
        Ok(())
    }
}

/// Serialized network: `{m, p, W, v, c, use_bias}` with `W` as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub m: usize,
    pub p: usize,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub c: f64,
    pub use_bias: bool,
}

impl TryFrom<Checkpoint> for ShallowReluNet {
    type Error = Error;

    fn try_from(ck: Checkpoint) -> Result<Self> {
        if ck.w.len() != ck.m || ck.w.iter().any(|r| r.len() != ck.p) {
            return Err(Error::DimensionMismatch("checkpoint W does not match m and p".into()));
        }
        let flat: Vec<f64> = ck.w.into_iter().flatten().collect();
        ShallowReluNet::new(DMatrix::from_row_slice(ck.m, ck.p, &flat), DVector::from_vec(ck.v), ck.c, ck.use_bias)
    }
}

/// Mean per-example loss of `net` on `dataset`.
pub fn empirical_loss(net: &ShallowReluNet, dataset: &Dataset, kind: LossKind) -> f64 {
    let y = dataset.labels();
    let total: f64 = (0..dataset.n()).map(|i| kind.eval(net.forward_homogeneous(dataset.xbar_col(i)), y[i])).sum();
    total / dataset.n() as f64
}

/// Fraction of examples whose thresholded output (`> 0` means class 1)
/// matches the 0/1 label.
pub fn accuracy(net: &ShallowReluNet, dataset: &Dataset) -> Result<f64> {
    let y = dataset.labels();
    if y.iter().any(|&l| l != 0.0 && l != 1.0) {
        return Err(Error::LabelsNotBinary);
    }
    let hits = (0..dataset.n())
        .filter(|&i| (net.forward_homogeneous(dataset.xbar_col(i)) > 0.0) == (y[i] == 1.0))
        .count();
    Ok(hits as f64 / dataset.n() as f64)
}

/// Gradient of the empirical loss with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradient {
    pub w: DMatrix<f64>,
    pub v: DVector<f64>,
    pub c: f64,
}

pub fn loss_gradient(net: &ShallowReluNet, dataset: &Dataset, kind: LossKind) -> NetGradient {
    let (m, p, n) = (net.m(), net.p(), dataset.n());
    let y = dataset.labels();
    let mut grad = NetGradient { w: DMatrix::zeros(m, p), v: DVector::zeros(m), c: 0.0 };
    let mut h = vec![0.0; m];
    for i in 0..n {
        let x = dataset.xbar_col(i);
        let mut yhat = net.c;
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = (0..p).map(|k| net.w[(j, k)] * x[k]).sum();
            yhat += net.v[j] * hj.max(0.0);
        }
        let g = kind.derivative(yhat, y[i]) / n as f64;
        grad.c += g;
        for j in 0..m {
            if h[j] > 0.0 {
                grad.v[j] += g * h[j];
                for k in 0..p {
                    grad.w[(j, k)] += g * net.v[j] * x[k];
                }
            }
        }
    }
    grad
}

/// How the output weights are set up for gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputWeights {
    /// Glorot-initialized and trained with the rest.
    Trained,
    /// Held at the given values.
    Fixed(Vec<f64>),
}

/// `+1` on the first `ceil(m/2)` units and `-1` on the rest.
pub fn pm_half(m: usize) -> Vec<f64> {
    (0..m).map(|j| if j < m.div_ceil(2) { 1.0 } else { -1.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOptions {
    pub m: usize,
    pub loss: LossKind,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    pub output: OutputWeights,
    pub log_every: usize,
}

impl GdOptions {
    pub fn new(m: usize, loss: LossKind, lr: f64, steps: usize, seed: u64) -> Self {
        Self { m, loss, lr, steps, seed, output: OutputWeights::Trained, log_every: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct GdRun {
    pub net: ShallowReluNet,
    pub log: Vec<LogEntry>,
}

/// Glorot-uniform initialization with a zero bias column.
pub fn glorot_init(m: usize, dataset: &Dataset, output: &OutputWeights, seed: u64) -> Result<ShallowReluNet> {
    let (d, p) = (dataset.d(), dataset.p());
    let mut rng = rng::stream(seed, Stream::Init);
    let bound = (6.0 / (d + m) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("positive bound");
    let mut w = DMatrix::zeros(m, p);
    for j in 0..m {
        for k in 0..d {
            w[(j, k)] = rng.sample(dist);
        }
    }
    let v = match output {
        OutputWeights::Trained => {
            let vb = (6.0 / (m + 1) as f64).sqrt();
            let vd = Uniform::new_inclusive(-vb, vb).expect("positive bound");
            DVector::from_fn(m, |_, _| rng.sample(vd))
        }
        OutputWeights::Fixed(v) => {
            if v.len() != m {
                return Err(Error::DimensionMismatch(format!("fixed v has {} entries, m = {m}", v.len())));
            }
            DVector::from_column_slice(v)
        }
    };
    ShallowReluNet::new(w, v, 0.0, dataset.use_bias())
}

/// Full-batch gradient descent on the empirical loss. The loss is logged
/// at step 0, every `log_every` steps, and after the final step.
pub fn gradient_descent(dataset: &Dataset, opts: &GdOptions) -> Result<GdRun> {
    if opts.m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    if !(opts.lr >= 0.0) || !opts.lr.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate must be nonnegative, got {}", opts.lr)));
    }
    let init = glorot_init(opts.m, dataset, &opts.output, opts.seed)?;
    let train_v = matches!(opts.output, OutputWeights::Trained);
    let (m, p, n) = (opts.m, dataset.p(), dataset.n());
    let y = dataset.labels();
    let xs = dataset.xbar().as_slice();
    // Row-major working copies keep the inner loops contiguous.
    let mut w: Vec<f64> = (0..m).flat_map(|j| (0..p).map(move |k| (j, k))).map(|(j, k)| init.w[(j, k)]).collect();
    let mut v: Vec<f64> = init.v.iter().copied().collect();
    let mut c = init.c;
    let (mut gw, mut gv) = (vec![0.0; m * p], vec![0.0; m]);
    let mut h = vec![0.0; m];
    let mut log = Vec::new();
    let log_every = opts.log_every.max(1);

    for step in 0..=opts.steps {
        gw.iter_mut().for_each(|g| *g = 0.0);
        gv.iter_mut().for_each(|g| *g = 0.0);
        let mut gc = 0.0;
        let mut loss = 0.0;
        for i in 0..n {
            let x = &xs[i * p..(i + 1) * p];
            let mut yhat = c;
            for j in 0..m {
                let wj = &w[j * p..(j + 1) * p];
                h[j] = wj.iter().zip(x).map(|(a, b)| a * b).sum();
                yhat += v[j] * h[j].max(0.0);
            }
            loss += opts.loss.eval(yhat, y[i]);
            let g = opts.loss.derivative(yhat, y[i]) / n as f64;
            gc += g;
            for j in 0..m {
                if h[j] > 0.0 {
                    gv[j] += g * h[j];
                    let s = g * v[j];
                    gw[j * p..(j + 1) * p].iter_mut().zip(x).for_each(|(a, b)| *a += s * b);
                }
            }
        }
        loss /= n as f64;
        if !loss.is_finite() || loss > 1e12 {
            return Err(Error::DivergenceDetected { step, loss });
        }
        if step % log_every == 0 || step == opts.steps {
            log.push(LogEntry { step, loss });
        }
        if step == opts.steps {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= opts.lr * g);
        if train_v {
            v.iter_mut().zip(&gv).for_each(|(a, g)| *a -= opts.lr * g);
        }
        c -= opts.lr * gc;
    }
    let net = ShallowReluNet::new(DMatrix::from_row_slice(m, p, &w), DVector::from_vec(v), c, dataset.use_bias())
        .map_err(|_| Error::DivergenceDetected { step: opts.steps, loss: f64::NAN })?;
    Ok(GdRun { net, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, gen_synthetic_with_teacher};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn net(w: &[f64], m: usize, v: &[f64], c: f64, use_bias: bool) -> ShallowReluNet {
        ShallowReluNet::new(DMatrix::from_row_slice(m, w.len() / m, w), DVector::from_column_slice(v), c, use_bias)
            .unwrap()
    }

    #[test]
    fn zero_weights_give_bias() {
        let n = net(&[0.0; 6], 2, &[1.0, -2.0], 0.75, true);
        assert_eq!(n.forward(&[3.0, -4.0]), 0.75);
    }

    #[test]
    fn identity_on_positive_ray() {
        let n = net(&[1.0, 0.0], 1, &[1.0], 0.0, true);
        assert_eq!(n.forward(&[3.0]), 3.0);
        assert_eq!(n.forward(&[-3.0]), 0.0);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        assert!(ShallowReluNet::new(DMatrix::zeros(2, 3), DVector::zeros(1), 0.0, true).is_err());
        let ds = Dataset::new(vec![vec![1.0]], vec![1.0], true).unwrap();
        let n = ShallowReluNet::single_unit(&[1.0], false);
        assert!(n.check_dataset(&ds).is_err());
    }

    #[test]
    fn logistic_is_softplus_form() {
        assert!((LossKind::Logistic.eval(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((LossKind::Logistic.eval(800.0, 1.0)).abs() < 1e-12);
        assert!((LossKind::Logistic.eval(-800.0, 0.0)).abs() < 1e-12);
        assert_eq!("l1".parse::<LossKind>().unwrap(), LossKind::L1);
        assert!("hinge".parse::<LossKind>().is_err());
    }

    #[test]
    fn empirical_loss_identities() {
        let (ds, teacher) = gen_synthetic_with_teacher(3, 2, 5);
        assert!(empirical_loss(&teacher, &ds, LossKind::Mse) < 1e-28);
        let y = ds.labels();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let constant = net(&vec![0.0; ds.p()], 1, &[1.0], mean, true);
        assert!((empirical_loss(&constant, &ds, LossKind::Mse) - var).abs() < 1e-12 * (1.0 + var));
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let ds = gen_synthetic(2, 3, 8);
        let n = glorot_init(3, &ds, &OutputWeights::Trained, 1).unwrap();
        let rev: Vec<usize> = (0..ds.n()).rev().collect();
        let a = empirical_loss(&n, &ds, LossKind::Mse);
        let b = empirical_loss(&n, &ds.select(&rev).unwrap(), LossKind::Mse);
        assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn accuracy_threshold_convention() {
        let zeros = net(&[0.0, 0.0], 1, &[1.0], 0.0, true);
        let neg = Dataset::new(vec![vec![1.0], vec![2.0]], vec![0.0, 0.0], true).unwrap();
        let pos = neg.with_labels(vec![1.0, 1.0]).unwrap();
        assert_eq!(accuracy(&zeros, &neg).unwrap(), 1.0);
        assert_eq!(accuracy(&zeros, &pos).unwrap(), 0.0);
        let ident = net(&[1.0, 0.0], 1, &[1.0], -1.5, true);
        let mixed = neg.with_labels(vec![0.0, 1.0]).unwrap();
        assert_eq!(accuracy(&ident, &mixed).unwrap(), 1.0);
        assert!(matches!(accuracy(&ident, &neg.with_labels(vec![0.5, 1.0]).unwrap()), Err(Error::LabelsNotBinary)));
    }

    #[test]
    fn positive_homogeneity_single_unit() {
        let n1 = net(&[0.3, -0.7, 0.2], 1, &[1.5], 0.0, true);
        let s = 4.0;
        let n2 = net(&[1.2, -2.8, 0.8], 1, &[1.5 / s], 0.0, true);
        for x in [[0.5, 0.1], [-1.0, 2.0], [3.0, -0.2]] {
            assert!((n1.forward(&x) - n2.forward(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let n = net(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, &[1.0, -1.0], 0.25, true);
        let ck = n.checkpoint();
        assert_eq!(ck.w[1], vec![4.0, 5.0, 6.0]);
        let json = serde_json::to_string(&ck).unwrap();
        assert!(json.contains("\"W\""));
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(ShallowReluNet::try_from(back).unwrap(), n);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ds = gen_synthetic(3, 2, 2);
        let mut probes = 0;
        while probes < 20 {
            let w: Vec<f64> = (0..3 * ds.p()).map(|_| rng.sample(StandardNormal)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let base = net(&w, 3, &v, 0.3, true);
            let h = 1e-6;
            let margin = (0..ds.n())
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| (0..ds.p()).map(|k| base.w[(j, k)] * ds.xbar_col(i)[k]).sum::<f64>().abs())
                .fold(f64::INFINITY, f64::min);
            if margin < 1e-3 {
                continue;
            }
            probes += 1;
            for kind in [LossKind::Mse, LossKind::Logistic] {
                let g = loss_gradient(&base, &ds, kind);
                for idx in 0..w.len() {
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[idx] += h;
                    wm[idx] -= h;
                    let fd = (empirical_loss(&net(&wp, 3, &v, 0.3, true), &ds, kind)
                        - empirical_loss(&net(&wm, 3, &v, 0.3, true), &ds, kind))
                        / (2.0 * h);
                    let an = g.w[(idx / ds.p(), idx % ds.p())];
                    assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "{fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let ds = gen_synthetic(2, 2, 4);
        let opts = GdOptions::new(3, LossKind::Mse, 0.0, 50, 9);
        let run = gradient_descent(&ds, &opts).unwrap();
        assert_eq!(run.net, glorot_init(3, &ds, &OutputWeights::Trained, 9).unwrap());
        assert_eq!(run.net.w().column(2).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
    }

    #[test]
    fn gd_decreases_loss_and_logs() {
        let ds = gen_synthetic(2, 2, 4);
        let opts = GdOptions { log_every: 100, ..GdOptions::new(4, LossKind::Mse, 1e-2, 2000, 3) };
        let run = gradient_descent(&ds, &opts).unwrap();
        assert_eq!(run.log.len(), 21);
        assert!(run.log.last().unwrap().loss < run.log[0].loss);
        assert!((empirical_loss(&run.net, &ds, LossKind::Mse) - run.log.last().unwrap().loss).abs() < 1e-12);
    }

    #[test]
    fn fixed_output_weights_stay_fixed() {
        let ds = gen_synthetic(2, 2, 4);
        let opts = GdOptions { output: OutputWeights::Fixed(pm_half(3)), ..GdOptions::new(3, LossKind::Mse, 1e-2, 100, 3) };
        let run = gradient_descent(&ds, &opts).unwrap();
        assert_eq!(run.net.v().as_slice(), &[1.0, 1.0, -1.0]);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let ds = gen_synthetic(2, 2, 4);
        let opts = GdOptions::new(4, LossKind::Mse, 1e6, 1000, 3);
        assert!(matches!(gradient_descent(&ds, &opts), Err(Error::DivergenceDetected { .. })));
    }
}
