use std::ops::Range;

use ndarray::{s, Array2, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOrigin {
    pub chunk: usize,
    /// Day offset of the first past day inside the chunk.
    pub offset: usize,
    /// Same day as an index into the full series.
    pub start: usize,
}

/// One forecasting example: conditioning `past` (N × T_p·U, column `day·U + feature`)
/// and target `future` (N × T_h log returns).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub past: Array2<f64>,
    pub future: Array2<f64>,
    pub origin: WindowOrigin,
}

impl WindowPair {
    pub fn past_days(&self, n_features: usize) -> usize {
        self.past.ncols() / n_features
    }

    pub fn horizon(&self) -> usize {
        self.future.ncols()
    }
}

/// Slides over `range` of the series. `features` is days × N × U, `returns` days × N.
pub fn window_dataset(
    returns: ArrayView2<'_, f64>,
    features: ArrayView3<'_, f64>,
    range: Range<usize>,
    chunk: usize,
    t_p: usize,
    t_h: usize,
    stride: usize,
) -> Result<Vec<WindowPair>> {
    if t_p == 0 || t_h == 0 || stride == 0 {
        bail!(Argument, "T_p, T_h and stride must be positive");
    }
    if features.dim().0 != returns.nrows() || features.dim().1 != returns.ncols() {
        bail!(Argument, "features {:?} do not match returns {:?}", features.dim(), returns.dim());
    }
    if range.end > returns.nrows() {
        bail!(Argument, "range {range:?} exceeds series length {}", returns.nrows());
    }
    let len = range.len();
    if len < t_p + t_h {
        log::warn!("series of length {len} is shorter than T_p + T_h = {}", t_p + t_h);
        return Ok(Vec::new());
    }
    let (_, n, u) = features.dim();
    let mut out = Vec::new();
    for offset in (0..=len - t_p - t_h).step_by(stride) {
        let start = range.start + offset;
        let mut past = Array2::zeros((n, t_p * u));
        for d in 0..t_p {
            past.slice_mut(s![.., d * u..(d + 1) * u]).assign(&features.index_axis(Axis(0), start + d));
        }
        let future = returns.slice(s![start + t_p..start + t_p + t_h, ..]).t().to_owned();
        out.push(WindowPair {
            past,
            future,
            origin: WindowOrigin { chunk, offset, start },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSplit {
    pub chunks: Vec<Range<usize>>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl ChunkSplit {
    pub fn train_days(&self) -> Vec<usize> {
        let mut days: Vec<usize> = self.train.iter().flat_map(|&c| self.chunks[c].clone()).collect();
        days.sort_unstable();
        days
    }
}

/// Cuts `n_days` into contiguous chunks of `chunk_len` (a short tail is
/// discarded), shuffles them and assigns `floor(ratio·n)` chunks to
/// validation and test with the remainder going to training.
pub fn chunk_split(n_days: usize, chunk_len: usize, ratios: (f64, f64, f64), seed: u64) -> Result<ChunkSplit> {
    if chunk_len == 0 {
        bail!(Argument, "chunk length must be positive");
    }
    let (r_train, r_val, r_test) = ratios;
    if [r_train, r_val, r_test].iter().any(|r| !(0.0..=1.0).contains(r)) || r_train + r_val + r_test > 1.0 + 1e-9 {
        bail!(Argument, "invalid split ratios {ratios:?}");
    }
    let n = n_days / chunk_len;
    if n < 3 {
        bail!(Argument, "{n_days} days give only {n} chunks of length {chunk_len}, need at least 3");
    }
    if n_days % chunk_len != 0 {
        log::info!("discarding the last {} days that do not fill a chunk", n_days % chunk_len);
    }
    let chunks: Vec<Range<usize>> = (0..n).map(|c| c * chunk_len..(c + 1) * chunk_len).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (r_val * n as f64 + 1e-9).floor() as usize;
    let n_test = (r_test * n as f64 + 1e-9).floor() as usize;
    let mut val = order[..n_val].to_vec();
    let mut test = order[n_val..n_val + n_test].to_vec();
    let mut train = order[n_val + n_test..].to_vec();
    if train.is_empty() {
        bail!(Argument, "split leaves no training chunks");
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(ChunkSplit { chunks, train, val, test })
}

/// Windows for a set of chunk ids, in chunk order.
pub fn windows_for(
    returns: ArrayView2<'_, f64>,
    features: ArrayView3<'_, f64>,
    split: &ChunkSplit,
    chunk_ids: &[usize],
    t_p: usize,
    t_h: usize,
    stride: usize,
) -> Result<Vec<WindowPair>> {
    let mut out = Vec::new();
    for &c in chunk_ids {
        out.extend(window_dataset(returns, features, split.chunks[c].clone(), c, t_p, t_h, stride)?);
    }
    Ok(out)
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-(node, feature) affine normalization fitted on training days.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    /// N × U
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
}

impl Standardizer {
    /// `data` is days × N × U; only the listed days contribute.
    pub fn fit(data: ArrayView3<'_, f64>, days: &[usize]) -> Result<Self> {
        if days.is_empty() {
            bail!(Argument, "cannot fit a standardizer on zero days");
        }
        let (_, n, u) = data.dim();
        let count = days.len() as f64;
        let mut mean = Array2::zeros((n, u));
        for &d in days {
            mean += &data.index_axis(Axis(0), d);
        }
        mean /= count;
        let mut var = Array2::<f64>::zeros((n, u));
        for &d in days {
            let diff = &data.index_axis(Axis(0), d) - &mean;
            var += &(&diff * &diff);
        }
        let std = (var / count).mapv(|v| v.sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn n_features(&self) -> usize {
        self.mean.ncols()
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.nrows() != self.mean.nrows() || x.ncols() % self.n_features() != 0 {
            bail!(Argument, "cannot standardize {:?} with stats {:?}", x.dim(), self.mean.dim());
        }
        Ok(())
    }

    /// Column `c` of `x` (N × k·U) is feature `c % U`.
    pub fn standardize(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let u = self.n_features();
        Ok(Array2::from_shape_fn(x.dim(), |(i, c)| (x[[i, c]] - self.mean[[i, c % u]]) / self.std[[i, c % u]]))
    }

    pub fn destandardize(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let u = self.n_features();
        Ok(Array2::from_shape_fn(x.dim(), |(i, c)| x[[i, c]] * self.std[[i, c % u]] + self.mean[[i, c % u]]))
    }
}
