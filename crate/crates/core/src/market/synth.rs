use chrono::{Datelike, Duration, NaiveDate, Weekday};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::table::{FundamentalsTable, PriceTable};
use crate::error::{bail, Result};
use crate::graph::GraphShift;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum SynthProcess {
    /// Independent geometric random walks.
    Grw { mu: f64, sigma: f64 },
    /// `r_k = mu + rho·S·(r_{k-1} - mu) + sigma·eps_k` with a normalized shift `S`.
    GraphVar { rho: f64, sigma: f64, mu: f64 },
}

pub const INITIAL_PRICE: f64 = 100.0;
const BURN_IN: usize = 200;

/// `n` consecutive weekdays starting at (or after) `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d.format("%Y-%m-%d").to_string());
        }
        d += Duration::days(1);
    }
    out
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date")
}

pub fn ticker_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("S{i:03}")).collect()
}

/// Synthetic return series (`days - 1` rows).
pub fn synth_returns(n: usize, n_returns: usize, graph: Option<&GraphShift<f64>>, process: SynthProcess, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let noise = |rng: &mut ChaCha8Rng| Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
    let mut out = Array2::zeros((n_returns, n));
    match process {
        SynthProcess::Grw { mu, sigma } => {
            if !(sigma >= 0.0 && mu.is_finite() && sigma.is_finite()) {
                bail!(Argument, "invalid GRW parameters mu={mu} sigma={sigma}");
            }
            for mut row in out.outer_iter_mut() {
                let eps = noise(rng);
                row.assign(&eps.mapv(|e| mu + sigma * e));
            }
        }
        SynthProcess::GraphVar { rho, sigma, mu } => {
            let Some(graph) = graph else {
                bail!(Argument, "graph_var needs a graph");
            };
            if graph.n_nodes() != n {
                bail!(Argument, "graph has {} nodes, expected {n}", graph.n_nodes());
            }
            if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite() && rho.is_finite()) {
                bail!(Argument, "invalid graph_var parameters rho={rho} sigma={sigma} mu={mu}");
            }
            let coef = rho / graph.spectral_norm();
            if coef.abs() * graph.spectral_norm() >= 1.0 {
                log::warn!("|rho| >= 1: the autoregression is not stable");
            }
            let mut dev = Array2::<f64>::zeros((n, 1));
            for k in 0..BURN_IN + n_returns {
                let eps = noise(rng).into_shape_with_order((n, 1)).expect("column");
                let next = graph.matrix().matmul(dev.view())? * coef + eps * sigma;
                dev = next;
                if k >= BURN_IN {
                    out.row_mut(k - BURN_IN).assign(&dev.column(0).mapv(|v| v + mu));
                }
            }
        }
    }
    Ok(out)
}

/// Prices start at [`INITIAL_PRICE`]; volumes are lognormal with a bump on large moves.
pub fn synth_market(n_stocks: usize, days: usize, graph: Option<&GraphShift<f64>>, process: SynthProcess, seed: u64) -> Result<PriceTable> {
    if n_stocks == 0 || days < 2 {
        bail!(Argument, "need at least one stock and two days");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let returns = synth_returns(n_stocks, days - 1, graph, process, &mut rng)?;
    let prices = super::returns::prices_from_returns(&vec![INITIAL_PRICE; n_stocks], &returns);
    let mut volumes = Array2::zeros((days, n_stocks));
    for d in 0..days {
        for i in 0..n_stocks {
            let shock = if d == 0 { 0.0 } else { returns[[d - 1, i]].abs() };
            let z: f64 = rng.sample(StandardNormal);
            volumes[[d, i]] = (13.0 + 0.3 * z + 10.0 * shock).exp().round();
        }
    }
    if !prices.iter().all(|p| p.is_finite() && *p > 0.0) {
        bail!(Numeric, "synthetic prices overflowed; reduce sigma or days");
    }
    Ok(PriceTable {
        tickers: ticker_names(n_stocks),
        dates: business_days(default_start(), days),
        prices,
        volumes: Some(volumes),
    })
}

const INDICATOR_NAMES: [&str; 6] = ["market_cap", "trailing_pe", "profit_margin", "beta", "dividend_yield", "debt_to_equity"];

/// Stocks are dealt round-robin into `n_sectors` clusters that share an
/// indicator profile up to noise, which gives a block-structured graph.
pub fn synth_fundamentals(n_stocks: usize, n_indicators: usize, n_sectors: usize, seed: u64) -> Result<FundamentalsTable> {
    if n_indicators < 2 || n_sectors == 0 {
        bail!(Argument, "need at least 2 indicators and 1 sector");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = Array2::from_shape_simple_fn((n_sectors, n_indicators), || rng.sample::<f64, _>(StandardNormal));
    let indicators = Array2::from_shape_fn((n_stocks, n_indicators), |(i, j)| {
        centers[[i % n_sectors, j]] + 0.3 * rng.sample::<f64, _>(StandardNormal)
    });
    let names = (0..n_indicators)
        .map(|j| INDICATOR_NAMES.get(j).map(|s| s.to_string()).unwrap_or_else(|| format!("indicator_{j}")))
        .collect();
    Ok(FundamentalsTable {
        tickers: ticker_names(n_stocks),
        names,
        indicators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weekdays_only() {
        let d = business_days(NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(), 3);
        assert_eq!(d, vec!["2024-01-05", "2024-01-08", "2024-01-09"]);
    }

    #[test]
    fn deterministic_grw() {
        let t = synth_market(3, 5, None, SynthProcess::Grw { mu: 0.01, sigma: 0.0 }, 1).unwrap();
        for k in 0..5 {
            let expected = INITIAL_PRICE * (0.01 * k as f64).exp();
            assert!(t.prices.row(k).iter().all(|p| (p - expected).abs() < 1e-9));
        }
        assert_eq!(t, synth_market(3, 5, None, SynthProcess::Grw { mu: 0.01, sigma: 0.0 }, 1).unwrap());
    }

    #[test]
    fn graph_var_needs_graph() {
        assert!(synth_market(3, 5, None, SynthProcess::GraphVar { rho: 0.4, sigma: 0.01, mu: 0.0 }, 1).is_err());
    }
}
