use std::io::{Read, Write};

use super::metrics::Metrics;
use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub t_p: usize,
    pub t_h: usize,
    pub metric: String,
    pub value: f64,
}

pub fn report_rows(model: &str, t_p: usize, t_h: usize, metrics: &Metrics) -> Vec<ReportRow> {
    metrics
        .named()
        .iter()
        .map(|(name, value)| ReportRow {
            model: model.to_string(),
            t_p,
            t_h,
            metric: name.to_string(),
            value: *value,
        })
        .collect()
}

/// CSV with columns `model,T_p,T_h,metric,value`.
pub fn write_report<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["model", "T_p", "T_h", "metric", "value"])?;
    for r in rows {
        wtr.write_record([r.model.clone(), r.t_p.to_string(), r.t_h.to_string(), r.metric.clone(), format!("{:e}", r.value)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_report<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            bail!(Data, "report rows need 5 fields");
        }
        let num = |i: usize| rec[i].parse::<usize>().map_err(|e| crate::Error::Data(e.to_string()));
        out.push(ReportRow {
            model: rec[0].to_string(),
            t_p: num(1)?,
            t_h: num(2)?,
            metric: rec[3].to_string(),
            value: rec[4].parse().map_err(|e: std::num::ParseFloatError| crate::Error::Data(e.to_string()))?,
        });
    }
    Ok(out)
}

/// Looks up `value` for (model, metric).
pub fn lookup(rows: &[ReportRow], model: &str, metric: &str) -> Option<f64> {
    rows.iter().find(|r| r.model == model && r.metric == metric).map(|r| r.value)
}
