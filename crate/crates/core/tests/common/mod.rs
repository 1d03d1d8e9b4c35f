#![allow(dead_code)]

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ugnn::autodiff::{BoundParams, Tape, Tensor};
use ugnn::diffusion::{Denoiser, NoiseSchedule};
use ugnn::Result;
use ugnn::graph::{GraphShift, SamplerHierarchy};
use ugnn::model::{sampled_graph_conv, Activation, BatchGraph, ConvView, LayerParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Symmetric weighted Erdős–Rényi adjacency with at least one edge.
pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                let w = rng.random_range(0.1..1.0);
                a[[i, j]] = w;
                a[[j, i]] = w;
            }
        }
    }
    if n > 1 && a.iter().all(|&v| v == 0.0) {
        a[[0, 1]] = 1.0;
        a[[1, 0]] = 1.0;
    }
    a
}

/// Random nested kept sets of the original nodes, one per depth.
pub fn random_nested_sets(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        let keep = rng.random_range(1..=current.len());
        let mut picked: Vec<usize> = sample(rng, current.len(), keep).into_iter().map(|i| current[i]).collect();
        picked.sort_unstable();
        current = picked.clone();
        out.push(picked);
    }
    out
}

/// One linear (no norm, identity activation) sampled convolution at level `b`.
pub fn conv_layer(
    shift: &GraphShift<f64>,
    hierarchy: &SamplerHierarchy,
    gamma: usize,
    b: usize,
    view: ConvView,
    v: &Array2<f64>,
    taps: &[Array2<f64>],
) -> Array2<f64> {
    let graph = BatchGraph::new(shift, hierarchy, gamma, taps.len() - 1, view, 1).unwrap();
    let mut tape = Tape::new();
    let vt = tape.constant(v.clone()).unwrap();
    let hs = taps.iter().map(|h| tape.constant(h.clone()).unwrap()).collect();
    let layer = LayerParams { taps: hs, norm: None };
    let out = sampled_graph_conv(&mut tape, vt, &graph, b, &layer, Activation::Identity).unwrap();
    tape.value(out).clone()
}

/// `Σ_k D (S^γ)^k Dᵀ V H_k` with dense matrices throughout.
pub fn dense_sampled_conv(shift: &Array2<f64>, d: &Array2<f64>, gamma: usize, v: &Array2<f64>, taps: &[Array2<f64>]) -> Array2<f64> {
    let n = shift.nrows();
    let mut sg = Array2::eye(n);
    for _ in 0..gamma {
        sg = sg.dot(shift);
    }
    let mut power = Array2::eye(n);
    let mut acc = Array2::zeros((d.nrows(), taps[0].ncols()));
    for (k, h) in taps.iter().enumerate() {
        if k > 0 {
            power = power.dot(&sg);
        }
        acc = acc + d.dot(&power).dot(&d.t()).dot(v).dot(h);
    }
    acc
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact `E[ε | x_t]` for independent Gaussian targets `x0 ~ N(mean, var)`,
/// ignoring the conditioning.
pub struct GaussianOracle {
    pub mean: Array2<f64>,
    pub var: Array2<f64>,
    pub alpha_bars: Vec<f64>,
    pub cond_width: usize,
}

impl GaussianOracle {
    pub fn new(mean: Array2<f64>, var: Array2<f64>, schedule: &NoiseSchedule<f64>) -> Self {
        Self { mean, var, alpha_bars: schedule.alpha_bars().to_vec(), cond_width: 1 }
    }
}

impl Denoiser<f64> for GaussianOracle {
    fn n_nodes(&self) -> usize {
        self.mean.nrows()
    }
    fn target_width(&self) -> usize {
        self.mean.ncols()
    }
    fn conditioning_width(&self) -> usize {
        self.cond_width
    }
    fn predict_on(&self, tape: &mut Tape<f64>, _: &BoundParams, x_t: Tensor, steps: &[usize], _: Tensor) -> Result<Tensor> {
        let x = tape.value(x_t).clone();
        let n = self.mean.nrows();
        let out = Array2::from_shape_fn(x.dim(), |(r, c)| {
            let ab = self.alpha_bars[steps[r / n] - 1];
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            let (m, v) = (self.mean[[r % n, c]], self.var[[r % n, c]]);
            b * (x[[r, c]] - a * m) / (a * a * v + b * b)
        });
        tape.constant(out)
    }
}

/// Predicts zero for every input.
pub struct ZeroDenoiser {
    pub n: usize,
    pub f: usize,
}

impl Denoiser<f64> for ZeroDenoiser {
    fn n_nodes(&self) -> usize {
        self.n
    }
    fn target_width(&self) -> usize {
        self.f
    }
    fn conditioning_width(&self) -> usize {
        1
    }
    fn predict_on(&self, tape: &mut Tape<f64>, _: &BoundParams, x_t: Tensor, _: &[usize], _: Tensor) -> Result<Tensor> {
        tape.constant(Array2::zeros(x_t.shape()))
    }
}
