use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{bail, Result};

/// Dense adjacency with optional node labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledAdjacency {
    pub labels: Option<Vec<String>>,
    pub matrix: Array2<f64>,
}

/// Reads a dense row-major matrix. A first row that does not parse as
/// numbers is treated as a header of node labels.
pub fn read_adjacency_csv<R: Read>(reader: R) -> Result<LabeledAdjacency> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => labels = Some(record.iter().map(str::to_string).collect::<Vec<_>>()),
            Err(e) => bail!(Data, "adjacency row {}: {e}", i + 1),
        }
    }
    let n = rows.len();
    if n == 0 {
        bail!(Data, "adjacency file is empty");
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        bail!(Data, "adjacency row {} has {} entries, expected {n}", i + 1, row.len());
    }
    if let Some(l) = &labels {
        if l.len() != n {
            bail!(Data, "adjacency header has {} labels for {n} nodes", l.len());
        }
    }
    Ok(LabeledAdjacency {
        labels,
        matrix: Array2::from_shape_vec((n, n), rows.concat()).expect("checked shape"),
    })
}

pub fn write_adjacency_csv<W: Write>(writer: W, adjacency: &Array2<f64>, labels: Option<&[String]>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    if let Some(labels) = labels {
        if labels.len() != adjacency.ncols() {
            bail!(Structural, "{} labels for {} columns", labels.len(), adjacency.ncols());
        }
        wtr.write_record(labels)?;
    }
    for row in adjacency.rows() {
        wtr.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    wtr.flush()?;
    Ok(())
}
