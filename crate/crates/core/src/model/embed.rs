use ndarray::Array2;

use crate::error::{bail, Result};
use crate::scalar::Scalar;

const FREQUENCY_BASE: f64 = 10000.0;

/// Sinusoidal embedding of a diffusion step broadcast over `n_rows` nodes:
/// `[sin(tω_1)..sin(tω_{d/2}), cos(tω_1)..cos(tω_{d/2})]` with geometric
/// frequencies `ω_i = 10000^{-2(i-1)/d}`.
pub fn time_embedding<T: Scalar>(t: f64, dim: usize, n_rows: usize) -> Result<Array2<T>> {
    if dim % 2 != 0 {
        bail!(Argument, "time embedding width {dim} must be even");
    }
    if !(t >= 0.0) {
        bail!(Argument, "diffusion step must be non-negative, got {t}");
    }
    let row = embedding_row(t, dim);
    Ok(Array2::from_shape_fn((n_rows, dim), |(_, j)| T::of(row[j])))
}

/// Embedding for a stacked batch: rows `i·n_nodes..(i+1)·n_nodes` use `steps[i]`.
pub fn batched_time_embedding<T: Scalar>(steps: &[usize], n_nodes: usize, dim: usize) -> Result<Array2<T>> {
    if dim % 2 != 0 {
        bail!(Argument, "time embedding width {dim} must be even");
    }
    let mut out = Array2::zeros((steps.len() * n_nodes, dim));
    for (i, &t) in steps.iter().enumerate() {
        let row = embedding_row(t as f64, dim);
        for r in i * n_nodes..(i + 1) * n_nodes {
            for (j, v) in row.iter().enumerate() {
                out[[r, j]] = T::of(*v);
            }
        }
    }
    Ok(out)
}

fn embedding_row(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| FREQUENCY_BASE.powf(-2.0 * i as f64 / dim as f64))
        .collect();
    freqs
        .iter()
        .map(|w| (t * w).sin())
        .chain(freqs.iter().map(|w| (t * w).cos()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_zero() {
        let e = time_embedding::<f64>(0.0, 4, 3).unwrap();
        for row in e.rows() {
            assert_eq!(row.to_vec(), vec![0.0, 0.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn step_one() {
        let e = time_embedding::<f64>(1.0, 4, 2).unwrap();
        let expect = [0.8414709848078965, 0.009999833334166664, 0.5403023058681398, 0.9999500004166653];
        for row in e.rows() {
            for (a, b) in row.iter().zip(expect) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        assert_eq!(e.row(0), e.row(1));
    }

    #[test]
    fn odd_width_rejected() {
        assert!(time_embedding::<f64>(1.0, 3, 1).is_err());
        assert!(batched_time_embedding::<f64>(&[1], 1, 5).is_err());
    }

    #[test]
    fn batched_rows_follow_steps() {
        let e = batched_time_embedding::<f64>(&[0, 1], 2, 4).unwrap();
        let t0 = time_embedding::<f64>(0.0, 4, 1).unwrap();
        let t1 = time_embedding::<f64>(1.0, 4, 1).unwrap();
        assert_eq!(e.row(1), t0.row(0));
        assert_eq!(e.row(2), t1.row(0));
    }
}
