use std::fmt::Write;

use ndarray::Array2;
use ugnn::eval::{quantile_sorted, MetricMode};
use ugnn::{Error, Result};

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 280.0;
const MARGIN: f64 = 44.0;

/// One panel per node: thin sample paths, the ensemble mean, the central 95%
/// band and the realized path when available.
pub fn render(trajs: &[Array2<f64>], target: Option<&Array2<f64>>, nodes: &[usize], mode: MetricMode) -> Result<String> {
    let Some(first) = trajs.first() else {
        return Err(Error::Data("ensemble is empty".into()));
    };
    let (n_nodes, _) = first.dim();
    if let Some(&bad) = nodes.iter().find(|&&n| n >= n_nodes) {
        return Err(Error::Argument(format!("node {bad} out of range, the ensemble has {n_nodes} nodes")));
    }
    if nodes.is_empty() {
        return Err(Error::Argument("no nodes to plot".into()));
    }
    let paths: Vec<Array2<f64>> = trajs.iter().map(|t| mode.transform(t)).collect();
    let target = target.map(|t| mode.transform(t));
    let width = PANEL_W;
    let height = PANEL_H * nodes.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, &node) in nodes.iter().enumerate() {
        panel(&mut svg, &paths, target.as_ref(), node, p as f64 * PANEL_H);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn panel(svg: &mut String, paths: &[Array2<f64>], target: Option<&Array2<f64>>, node: usize, y0: f64) {
    let days = paths[0].ncols();
    // day 0 is the forecast origin, where every cumulative path starts at 0
    let series: Vec<Vec<f64>> = paths
        .iter()
        .map(|t| std::iter::once(0.0).chain(t.row(node).iter().copied()).collect())
        .collect();
    let truth: Option<Vec<f64>> = target.map(|t| std::iter::once(0.0).chain(t.row(node).iter().copied()).collect());
    let mut lower = Vec::with_capacity(days + 1);
    let mut upper = Vec::with_capacity(days + 1);
    let mut mean = Vec::with_capacity(days + 1);
    for d in 0..=days {
        let mut col: Vec<f64> = series.iter().map(|s| s[d]).collect();
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, 0.025));
        upper.push(quantile_sorted(&col, 0.975));
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
    }
    let all = series.iter().flatten().chain(truth.iter().flatten());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        lo -= 1e-3;
        hi += 1e-3;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |d: usize| MARGIN + (PANEL_W - 1.5 * MARGIN) * d as f64 / days.max(1) as f64;
    let y = |v: f64| y0 + PANEL_H - MARGIN + (PANEL_H - 1.5 * MARGIN) * (lo - v) / (hi - lo);
    let polyline = |vals: &[f64]| -> String {
        vals.iter().enumerate().map(|(d, &v)| format!("{:.2},{:.2}", x(d), y(v))).collect::<Vec<_>>().join(" ")
    };

    let _ = writeln!(svg, r#"<g>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
        y0 + MARGIN / 2.0,
        PANEL_W - 1.5 * MARGIN,
        PANEL_H - 1.5 * MARGIN
    );
    let band: Vec<String> = upper
        .iter()
        .enumerate()
        .map(|(d, &v)| format!("{:.2},{:.2}", x(d), y(v)))
        .chain(lower.iter().enumerate().rev().map(|(d, &v)| format!("{:.2},{:.2}", x(d), y(v))))
        .collect();
    let _ = writeln!(svg, r##"<polygon points="{}" fill="#4c78a8" fill-opacity="0.25" stroke="none"/>"##, band.join(" "));
    for s in &series {
        let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#4c78a8" stroke-opacity="0.3" stroke-width="0.8"/>"##, polyline(s));
    }
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#1f4e79" stroke-width="2"/>"##, polyline(&mean));
    if let Some(t) = &truth {
        let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="black" stroke-width="1.6" stroke-dasharray="5,3"/>"##, polyline(t));
    }
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{:.2}">node {node}</text>"#, y0 + MARGIN / 2.0 - 6.0);
    let _ = writeln!(svg, r#"<text x="4" y="{:.2}">{hi:.3}</text>"#, y(hi) + 4.0);
    let _ = writeln!(svg, r#"<text x="4" y="{:.2}">{lo:.3}</text>"#, y(lo));
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">day {days}</text>"#, x(days) - 30.0, y0 + PANEL_H - MARGIN + 16.0);
    let _ = writeln!(svg, "</g>");
}
