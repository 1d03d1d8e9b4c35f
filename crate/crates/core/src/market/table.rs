use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{bail, Result};

/// Daily adjusted closes (days × N) with optional volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub tickers: Vec<String>,
    pub dates: Vec<String>,
    pub prices: Array2<f64>,
    pub volumes: Option<Array2<f64>>,
}

impl PriceTable {
    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// Reads the long format `date,ticker,adj_close[,volume,...]`.
    ///
    /// Dates order lexicographically (ISO 8601). Missing cells are
    /// forward-filled; leading dates on which some ticker has not started
    /// trading yet are dropped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(c_date), Some(c_ticker), Some(c_close)) = (col("date"), col("ticker"), col("adj_close")) else {
            bail!(Data, "prices header must contain date, ticker and adj_close");
        };
        let c_volume = col("volume");

        let mut tickers: Vec<String> = Vec::new();
        let mut ticker_idx: HashMap<String, usize> = HashMap::new();
        let mut cells: Vec<(String, usize, f64, Option<f64>)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let ticker = field(c_ticker).to_string();
            let idx = *ticker_idx.entry(ticker.clone()).or_insert_with(|| {
                tickers.push(ticker.clone());
                tickers.len() - 1
            });
            let close: f64 = field(c_close)
                .parse()
                .map_err(|e| crate::Error::Data(format!("prices line {}: adj_close: {e}", line + 2)))?;
            let volume = match c_volume {
                Some(c) if !field(c).is_empty() => Some(
                    field(c)
                        .parse::<f64>()
                        .map_err(|e| crate::Error::Data(format!("prices line {}: volume: {e}", line + 2)))?,
                ),
                _ => None,
            };
            cells.push((field(c_date).to_string(), idx, close, volume));
        }
        if cells.is_empty() {
            bail!(Data, "prices file has no rows");
        }
        let mut dates: Vec<String> = cells.iter().map(|c| c.0.clone()).collect();
        dates.sort();
        dates.dedup();
        let date_idx: HashMap<&str, usize> = dates.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let (days, n) = (dates.len(), tickers.len());
        let mut prices = Array2::from_elem((days, n), f64::NAN);
        let mut volumes = Array2::from_elem((days, n), f64::NAN);
        let mut any_volume = false;
        for (date, j, close, vol) in &cells {
            let i = date_idx[date.as_str()];
            if !prices[[i, *j]].is_nan() {
                bail!(Data, "duplicate row for {} on {date}", tickers[*j]);
            }
            prices[[i, *j]] = *close;
            if let Some(v) = vol {
                volumes[[i, *j]] = *v;
                any_volume = true;
            }
        }
        let start = (0..days)
            .find(|&i| (0..n).all(|j| prices.slice(ndarray::s![..=i, j]).iter().any(|v| !v.is_nan())))
            .ok_or_else(|| crate::Error::Data("no date on which every ticker has traded".into()))?;
        if start > 0 {
            log::warn!("dropping {start} leading dates before every ticker has a price");
        }
        forward_fill(&mut prices);
        let prices = prices.slice(ndarray::s![start.., ..]).to_owned();
        let volumes = any_volume.then(|| {
            forward_fill(&mut volumes);
            // volumes missing from the start are treated as zero activity
            volumes
                .slice(ndarray::s![start.., ..])
                .mapv(|v| if v.is_nan() { 0.0 } else { v })
        });
        Ok(Self {
            tickers,
            dates: dates[start..].to_vec(),
            prices,
            volumes,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date", "ticker", "adj_close", "volume"])?;
        for (i, date) in self.dates.iter().enumerate() {
            for (j, ticker) in self.tickers.iter().enumerate() {
                let vol = self
                    .volumes
                    .as_ref()
                    .map(|v| format!("{:e}", v[[i, j]]))
                    .unwrap_or_default();
                wtr.write_record([date.clone(), ticker.clone(), format!("{:e}", self.prices[[i, j]]), vol])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn forward_fill(m: &mut Array2<f64>) {
    for j in 0..m.ncols() {
        let mut last = f64::NAN;
        for i in 0..m.nrows() {
            if m[[i, j]].is_nan() {
                m[[i, j]] = last;
            } else {
                last = m[[i, j]];
            }
        }
    }
}

/// Long-term per-stock indicators (N × M).
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalsTable {
    pub tickers: Vec<String>,
    pub names: Vec<String>,
    pub indicators: Array2<f64>,
}

impl FundamentalsTable {
    /// Reads `ticker,<indicator>...`. Empty or non-numeric cells are imputed
    /// with the column mean.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("ticker") {
            bail!(Data, "fundamentals header must start with ticker");
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut tickers = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            tickers.push(rec[0].to_string());
            for j in 0..names.len() {
                values.push(rec.get(j + 1).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()).unwrap_or(f64::NAN));
            }
        }
        let mut indicators = Array2::from_shape_vec((tickers.len(), names.len()), values)
            .map_err(|e| crate::Error::Data(e.to_string()))?;
        for mut col in indicators.columns_mut() {
            let present: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            let mean = if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            };
            col.mapv_inplace(|v| if v.is_nan() { mean } else { v });
        }
        Ok(Self {
            tickers,
            names,
            indicators,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["ticker".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        for (i, t) in self.tickers.iter().enumerate() {
            let mut row = vec![t.clone()];
            row.extend(self.indicators.row(i).iter().map(|v| format!("{v:e}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
