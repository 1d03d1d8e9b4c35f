use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::trajectory_rng;
use crate::error::{bail, Result};
use super::metrics::shifted_mean;

/// Per-stock drift and volatility of daily log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct GrwParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Sample mean and unbiased sample standard deviation.
pub fn fit_grw_series(returns: &[f64]) -> Result<(f64, f64)> {
    let n = returns.len();
    if n < 2 {
        bail!(Argument, "GRW fit needs at least 2 returns, got {n}");
    }
    if returns.iter().any(|r| !r.is_finite()) {
        bail!(Numeric, "non-finite return in GRW fit");
    }
    let mu = shifted_mean(returns.iter().copied());
    let var = returns.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mu, var.sqrt()))
}

/// Fits every row of `past` (N × T_p).
pub fn fit_grw(past: ArrayView2<'_, f64>) -> Result<GrwParams> {
    let mut mu = Vec::with_capacity(past.nrows());
    let mut sigma = Vec::with_capacity(past.nrows());
    for row in past.outer_iter() {
        let (m, s) = fit_grw_series(&row.to_vec())?;
        mu.push(m);
        sigma.push(s);
    }
    Ok(GrwParams { mu, sigma })
}

/// `n_traj` trajectories (each N × T_h) of i.i.d. `N(mu, sigma²)` log returns.
/// Trajectory `j` of window `window` always uses the same random stream.
pub fn simulate_grw(params: &GrwParams, t_h: usize, n_traj: usize, seed: u64, window: u64) -> Result<Vec<Array2<f64>>> {
    if params.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || params.mu.iter().any(|m| !m.is_finite()) {
        bail!(Argument, "invalid GRW parameters");
    }
    let n = params.mu.len();
    Ok((0..n_traj)
        .map(|j| {
            let mut rng = trajectory_rng(seed, window, j as u64);
            let mut out = Array2::zeros((n, t_h));
            for d in 0..t_h {
                for i in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    out[[i, d]] = params.mu[i] + params.sigma[i] * z;
                }
            }
            out
        })
        .collect())
}
