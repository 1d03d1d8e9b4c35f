use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::table::{FundamentalsTable, PriceTable};
use crate::error::{bail, Result};

/// `r[k][i] = ln(p[k+1][i] / p[k][i])`.
///
/// `tickers` and `dates` only serve error messages and may be empty.
pub fn log_returns(prices: &Array2<f64>, tickers: &[String], dates: &[String]) -> Result<Array2<f64>> {
    for ((k, i), &p) in prices.indexed_iter() {
        if !(p > 0.0 && p.is_finite()) {
            let ticker = tickers.get(i).map(String::as_str).unwrap_or("?");
            let date = dates.get(k).map(String::as_str).unwrap_or("?");
            bail!(Data, "non-positive price {p} for {ticker} on {date}");
        }
    }
    let days = prices.nrows();
    if days < 2 {
        return Ok(Array2::zeros((0, prices.ncols())));
    }
    let logs = prices.mapv(f64::ln);
    Ok(&logs.slice(ndarray::s![1.., ..]) - &logs.slice(ndarray::s![..days - 1, ..]))
}

/// Inverse of [`log_returns`] given the first price row.
pub fn prices_from_returns(p0: &[f64], returns: &Array2<f64>) -> Array2<f64> {
    let n = p0.len();
    let mut out = Array2::zeros((returns.nrows() + 1, n));
    let mut log_p: Vec<f64> = p0.iter().map(|p| p.ln()).collect();
    for j in 0..n {
        out[[0, j]] = p0[j];
    }
    for (k, row) in returns.outer_iter().enumerate() {
        for j in 0..n {
            log_p[j] += row[j];
            out[[k + 1, j]] = log_p[j].exp();
        }
    }
    out
}

/// Per-day conditioning features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    LogReturn,
    /// `ln(1 + volume)` on the closing day of the return.
    LogVolume,
}

impl Feature {
    pub fn defaults() -> Vec<Feature> {
        vec![Feature::LogReturn, Feature::LogVolume]
    }
}

/// Returns `(returns, features)` with shapes `(days-1)×N` and `(days-1)×N×U`.
pub fn day_features(table: &PriceTable, features: &[Feature]) -> Result<(Array2<f64>, Array3<f64>)> {
    if features.is_empty() {
        bail!(Config, "at least one feature is required");
    }
    let returns = log_returns(&table.prices, &table.tickers, &table.dates)?;
    let (len, n) = returns.dim();
    let mut out = Array3::zeros((len, n, features.len()));
    for (u, f) in features.iter().enumerate() {
        match f {
            Feature::LogReturn => out.index_axis_mut(Axis(2), u).assign(&returns),
            Feature::LogVolume => {
                let Some(vol) = &table.volumes else {
                    bail!(Data, "log_volume feature requested but the prices file has no volume column");
                };
                let v = vol.slice(ndarray::s![1.., ..]).mapv(|v| v.max(0.0).ln_1p());
                out.index_axis_mut(Axis(2), u).assign(&v);
            }
        }
    }
    Ok((returns, out))
}

/// Absolute Pearson correlation between stock indicator rows, zero diagonal.
pub fn build_fundamentals_graph(fund: &FundamentalsTable) -> Result<Array2<f64>> {
    let n = fund.indicators.nrows();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for (j, col) in fund.indicators.columns().into_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if !(var > 1e-24) {
            let name = fund.names.get(j).map(String::as_str).unwrap_or("?");
            log::warn!("dropping zero-variance indicator {name}");
            continue;
        }
        let sd = var.sqrt();
        kept.push(col.iter().map(|v| (v - mean) / sd).collect());
    }
    if kept.len() < 2 {
        bail!(Data, "need at least 2 indicators with nonzero variance, found {}", kept.len());
    }
    let m = kept.len();
    let z = Array2::from_shape_fn((n, m), |(i, j)| kept[j][i]);
    let mut adj = Array2::zeros((n, n));
    let rows: Vec<(f64, Vec<f64>)> = z
        .outer_iter()
        .map(|r| {
            let mean = r.sum() / m as f64;
            let centered: Vec<f64> = r.iter().map(|v| v - mean).collect();
            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm, centered)
        })
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let (ni, ri) = &rows[i];
            let (nj, rj) = &rows[j];
            let c = if *ni > 0.0 && *nj > 0.0 {
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                (dot / (ni * nj)).abs().min(1.0)
            } else {
                0.0
            };
            adj[[i, j]] = c;
            adj[[j, i]] = c;
        }
    }
    Ok(adj)
}
