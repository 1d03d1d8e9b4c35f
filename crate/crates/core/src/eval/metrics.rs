use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Energy-form CRPS of the empirical distribution of `samples`:
/// `mean |x_i - y| - mean_{i,j} |x_i - x_j| / 2`, with all n² pairs.
pub fn crps_ensemble(samples: &[f64], y: f64) -> Result<f64> {
    if samples.is_empty() {
        bail!(Argument, "CRPS needs at least one sample");
    }
    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_err = shifted_mean(sorted.iter().map(|x| (x - y).abs()));
    // sum_{i<j} |x_i - x_j| = sum_k k (n - k) (x_(k) - x_(k-1)), so identical
    // samples contribute exactly nothing
    let pairs: f64 = sorted
        .windows(2)
        .enumerate()
        .map(|(k, w)| ((k + 1) * (n - k - 1)) as f64 * (w[1] - w[0]))
        .sum();
    let spread = 2.0 * pairs / (n * n) as f64;
    Ok((abs_err - 0.5 * spread).max(0.0))
}

/// Linear interpolation between order statistics at position `p·(n-1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Interval score of the central `1 - alpha` interval.
pub fn interval_score(lower: f64, upper: f64, y: f64, alpha: f64) -> f64 {
    (upper - lower) + (2.0 / alpha) * (lower - y).max(0.0) + (2.0 / alpha) * (y - upper).max(0.0)
}

pub fn mis(samples: &[f64], y: f64, alpha: f64) -> Result<f64> {
    if samples.len() < 2 {
        bail!(Argument, "MIS needs at least two samples, got {}", samples.len());
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!(Argument, "alpha must lie in (0, 1), got {alpha}");
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lower = quantile_sorted(&sorted, alpha / 2.0);
    let upper = quantile_sorted(&sorted, 1.0 - alpha / 2.0);
    Ok(interval_score(lower, upper, y, alpha))
}

/// Whether metrics see per-day log returns or their running sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    #[default]
    Cumulative,
    PerDay,
}

impl MetricMode {
    /// Applies the mode to a nodes × days matrix.
    pub fn transform(self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            MetricMode::PerDay => x.clone(),
            MetricMode::Cumulative => {
                let mut out = x.clone();
                out.accumulate_axis_inplace(Axis(1), |&prev, cur| *cur += prev);
                out
            }
        }
    }
}

fn check_ensemble(trajs: &[Array2<f64>], target: &Array2<f64>) -> Result<()> {
    if trajs.is_empty() {
        bail!(Argument, "empty ensemble");
    }
    if let Some(t) = trajs.iter().find(|t| t.dim() != target.dim()) {
        bail!(Argument, "trajectory shape {:?} differs from target {:?}", t.dim(), target.dim());
    }
    if trajs.iter().any(|t| t.iter().any(|v| !v.is_finite())) || target.iter().any(|v| !v.is_finite()) {
        bail!(Numeric, "ensemble contains non-finite values");
    }
    Ok(())
}

/// `x_0 + mean(x_i - x_0)`: exact when all values coincide.
pub(crate) fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let (mut acc, mut n) = (0.0, 0usize);
    for v in values {
        let x0 = *first.get_or_insert(v);
        acc += v - x0;
        n += 1;
    }
    first.map_or(0.0, |x0| x0 + acc / n as f64)
}

pub fn ensemble_mean(trajs: &[Array2<f64>]) -> Array2<f64> {
    let first = &trajs[0];
    let mut acc = Array2::zeros(first.dim());
    for t in &trajs[1..] {
        acc += &(t - first);
    }
    first + &(acc / trajs.len() as f64)
}

pub fn rmse(trajs: &[Array2<f64>], target: &Array2<f64>) -> Result<f64> {
    check_ensemble(trajs, target)?;
    let diff = ensemble_mean(trajs) - target;
    Ok((diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt())
}

pub fn mae(trajs: &[Array2<f64>], target: &Array2<f64>) -> Result<f64> {
    check_ensemble(trajs, target)?;
    let diff = ensemble_mean(trajs) - target;
    Ok(diff.iter().map(|d| d.abs()).sum::<f64>() / diff.len() as f64)
}

/// Running sums over (day, node) cells, so that several windows pool into one score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricAccumulator {
    cells: usize,
    sq_err: f64,
    abs_err: f64,
    crps: f64,
    mis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub crps: f64,
    pub mis: f64,
}

impl Metrics {
    pub fn named(&self) -> [(&'static str, f64); 4] {
        [("RMSE", self.rmse), ("MAE", self.mae), ("CRPS", self.crps), ("MIS", self.mis)]
    }
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one window. Trajectories and target are nodes × days.
    pub fn add(&mut self, trajs: &[Array2<f64>], target: &Array2<f64>, mode: MetricMode, alpha: f64) -> Result<()> {
        check_ensemble(trajs, target)?;
        let trajs: Vec<Array2<f64>> = trajs.iter().map(|t| mode.transform(t)).collect();
        let target = mode.transform(target);
        let mean = ensemble_mean(&trajs);
        let mut samples = vec![0.0; trajs.len()];
        for ((node, day), &y) in target.indexed_iter() {
            for (s, t) in samples.iter_mut().zip(&trajs) {
                *s = t[[node, day]];
            }
            let e = mean[[node, day]] - y;
            self.sq_err += e * e;
            self.abs_err += e.abs();
            self.crps += crps_ensemble(&samples, y)?;
            self.mis += mis(&samples, y, alpha)?;
            self.cells += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.cells == 0 {
            bail!(Argument, "no windows were evaluated");
        }
        let c = self.cells as f64;
        Ok(Metrics {
            rmse: (self.sq_err / c).sqrt(),
            mae: self.abs_err / c,
            crps: self.crps / c,
            mis: self.mis / c,
        })
    }
}

/// Metrics of a single window.
pub fn evaluate_ensemble(trajs: &[Array2<f64>], target: &Array2<f64>, mode: MetricMode, alpha: f64) -> Result<Metrics> {
    let mut acc = MetricAccumulator::new();
    acc.add(trajs, target, mode, alpha)?;
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn crps_examples() {
        assert_eq!(crps_ensemble(&[1.0], 1.0).unwrap(), 0.0);
        assert_eq!(crps_ensemble(&[0.0, 2.0], 1.0).unwrap(), 0.5);
        assert_eq!(crps_ensemble(&[3.0, 3.0, 3.0], 1.0).unwrap(), 2.0);
        assert!(crps_ensemble(&[], 1.0).is_err());
    }

    #[test]
    fn interval_examples() {
        assert_eq!(interval_score(0.0, 1.0, 0.5, 0.05), 1.0);
        assert_eq!(interval_score(0.0, 1.0, 2.0, 0.05), 41.0);
        assert_eq!(interval_score(0.0, 1.0, 1.0, 0.05), 1.0);
        // the two-sample ensemble {0, 1} interpolates to l = 0.025, u = 0.975
        let m = mis(&[1.0, 0.0], 0.5, 0.05).unwrap();
        assert!((m - 0.95).abs() < 1e-12);
        assert!(mis(&[1.0], 0.5, 0.05).is_err());
    }

    #[test]
    fn quantile_linear() {
        let s = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 8.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
    }

    #[test]
    fn point_metrics() {
        let target = array![[0.1, -0.2], [0.3, 0.0]];
        assert_eq!(rmse(&[target.clone(), target.clone()], &target).unwrap(), 0.0);
        let pm = [&target + 1.0, &target - 1.0];
        assert!(rmse(&pm, &target).unwrap() < 1e-15);
        let off = [&target + 0.25];
        assert!((rmse(&off, &target).unwrap() - 0.25).abs() < 1e-15);
        assert!((mae(&off, &target).unwrap() - 0.25).abs() < 1e-15);
        assert!(rmse(&[], &target).is_err());
    }

    #[test]
    fn cumulative_mode() {
        let x = array![[1.0, 2.0, 3.0]];
        assert_eq!(MetricMode::Cumulative.transform(&x), array![[1.0, 3.0, 6.0]]);
        assert_eq!(MetricMode::PerDay.transform(&x), x);
    }

    #[test]
    fn collapsed_ensemble_crps_is_mae() {
        let target = array![[0.1, -0.2], [0.3, 0.0]];
        let point = array![[0.0, 0.4], [-0.1, 0.2]];
        let m = evaluate_ensemble(&[point.clone(), point.clone()], &target, MetricMode::PerDay, DEFAULT_ALPHA).unwrap();
        assert_eq!(m.crps, m.mae);
    }
}
