//! Ancestral sampling with per-trajectory random streams.

use std::io::{Read, Write};

use ndarray::{concatenate, s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::process::{reverse_with, standard_normal, to_eps, Denoiser, Objective};
use super::schedule::NoiseSchedule;
use crate::autodiff::{ParameterStore, Tape};
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Trajectories batched into one forward pass.
pub const DEFAULT_SAMPLE_BATCH: usize = 64;

/// RNG for trajectory `traj` of conditioning window `window`.
///
/// Every (window, trajectory) pair owns an independent stream, so results do
/// not depend on how trajectories are batched or ordered.
pub fn trajectory_rng(seed: u64, window: u64, traj: u64) -> ChaCha8Rng {
    let mixed = seed ^ window.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(traj);
    rng
}

/// Draws `n_traj` samples conditioned on `u` (N × U), each N × F.
pub fn sample<T: Scalar, D: Denoiser<T> + ?Sized>(
    denoiser: &D,
    params: &ParameterStore<T>,
    u: &Array2<T>,
    schedule: &NoiseSchedule<T>,
    objective: Objective,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<Array2<T>>> {
    let mut all = sample_windows(
        denoiser,
        params,
        std::slice::from_ref(u),
        schedule,
        objective,
        n_traj,
        seed,
        DEFAULT_SAMPLE_BATCH,
    )?;
    Ok(all.remove(0))
}

/// Samples `n_traj` trajectories for each conditioning window, batching up
/// to `max_batch` trajectories per forward pass.
#[allow(clippy::too_many_arguments)]
pub fn sample_windows<T: Scalar, D: Denoiser<T> + ?Sized>(
    denoiser: &D,
    params: &ParameterStore<T>,
    conditions: &[Array2<T>],
    schedule: &NoiseSchedule<T>,
    objective: Objective,
    n_traj: usize,
    seed: u64,
    max_batch: usize,
) -> Result<Vec<Vec<Array2<T>>>> {
    let ids: Vec<u64> = (0..conditions.len() as u64).collect();
    sample_windows_with_ids(denoiser, params, conditions, &ids, schedule, objective, n_traj, seed, max_batch)
}

/// Like [`sample_windows`], but window `w` draws from the streams of `ids[w]`,
/// so a window sampled on its own matches the same window sampled in a set.
#[allow(clippy::too_many_arguments)]
pub fn sample_windows_with_ids<T: Scalar, D: Denoiser<T> + ?Sized>(
    denoiser: &D,
    params: &ParameterStore<T>,
    conditions: &[Array2<T>],
    ids: &[u64],
    schedule: &NoiseSchedule<T>,
    objective: Objective,
    n_traj: usize,
    seed: u64,
    max_batch: usize,
) -> Result<Vec<Vec<Array2<T>>>> {
    if ids.len() != conditions.len() {
        bail!(Argument, "{} window ids for {} windows", ids.len(), conditions.len());
    }
    if n_traj == 0 {
        bail!(Argument, "n_traj must be at least 1");
    }
    if max_batch == 0 {
        bail!(Argument, "batch size must be positive");
    }
    let n = denoiser.n_nodes();
    let f = denoiser.target_width();
    for (w, u) in conditions.iter().enumerate() {
        if u.dim() != (n, denoiser.conditioning_width()) {
            bail!(
                Contract,
                "window {w}: conditioning {:?}, expected {:?}",
                u.dim(),
                (n, denoiser.conditioning_width())
            );
        }
    }
    let jobs: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|w| (0..n_traj).map(move |j| (w, j)))
        .collect();
    let mut out: Vec<Vec<Array2<T>>> = vec![Vec::with_capacity(n_traj); conditions.len()];
    for chunk in jobs.chunks(max_batch) {
        let mut rngs: Vec<ChaCha8Rng> = chunk
            .iter()
            .map(|&(w, j)| trajectory_rng(seed, ids[w], j as u64))
            .collect();
        let mut xs: Vec<Array2<T>> = rngs.iter_mut().map(|r| standard_normal(r, n, f)).collect();
        let u_views: Vec<_> = chunk.iter().map(|&(w, _)| conditions[w].view()).collect();
        let u = concatenate(Axis(0), &u_views).map_err(|e| crate::Error::Structural(e.to_string()))?;
        let m = chunk.len();
        for t in (1..=schedule.steps()).rev() {
            let beta = schedule.beta(t)?;
            let alpha = schedule.alpha(t)?;
            let ab = schedule.alpha_bar(t)?;
            let x_views: Vec<_> = xs.iter().map(|x| x.view()).collect();
            let x_t = concatenate(Axis(0), &x_views).map_err(|e| crate::Error::Structural(e.to_string()))?;
            let pred = {
                let mut tape = Tape::new();
                let bound = tape.bind(params)?;
                let xv = tape.constant(x_t.clone())?;
                let uv = tape.constant(u.clone())?;
                let steps = vec![t; m];
                let p = denoiser.predict_on(&mut tape, &bound, xv, &steps, uv)?;
                tape.value(p).clone()
            };
            let eps = to_eps(pred, &x_t, ab, objective);
            for (i, (x, rng)) in xs.iter_mut().zip(rngs.iter_mut()).enumerate() {
                let e = eps.slice(s![i * n..(i + 1) * n, ..]).to_owned();
                let w = if t > 1 {
                    standard_normal(rng, n, f)
                } else {
                    Array2::zeros((n, f))
                };
                *x = reverse_with(x, &e, beta, alpha, ab, &w);
                if x.iter().any(|v| !v.is_finite()) {
                    bail!(Numeric, "non-finite sample at step {t}");
                }
            }
        }
        for (&(w, _), x) in chunk.iter().zip(xs) {
            out[w].push(x);
        }
    }
    Ok(out)
}

/// Writes trajectories (each nodes × days) as `traj_id,day,node_id,value`.
pub fn write_ensemble_csv<W: Write>(writer: W, trajs: &[Array2<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["traj_id", "day", "node_id", "value"])?;
    for (j, traj) in trajs.iter().enumerate() {
        for day in 0..traj.ncols() {
            for node in 0..traj.nrows() {
                wtr.write_record([
                    j.to_string(),
                    day.to_string(),
                    node.to_string(),
                    format!("{:e}", traj[[node, day]]),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads an ensemble CSV back into nodes × days trajectories.
pub fn read_ensemble_csv<R: Read>(reader: R) -> Result<Vec<Array2<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["traj_id", "day", "node_id", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        bail!(Data, "ensemble header must be {}", expected.join(","));
    }
    let mut rows = Vec::new();
    let (mut n_traj, mut n_days, mut n_nodes) = (0usize, 0usize, 0usize);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_idx = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|e| crate::Error::Data(format!("ensemble line {}: {e}", line + 2)))
        };
        let (j, d, n) = (parse_idx(0)?, parse_idx(1)?, parse_idx(2)?);
        let v: f64 = rec[3]
            .parse()
            .map_err(|e| crate::Error::Data(format!("ensemble line {}: {e}", line + 2)))?;
        n_traj = n_traj.max(j + 1);
        n_days = n_days.max(d + 1);
        n_nodes = n_nodes.max(n + 1);
        rows.push((j, d, n, v));
    }
    if rows.len() != n_traj * n_days * n_nodes || rows.is_empty() {
        bail!(Data, "ensemble is not a complete traj x day x node grid");
    }
    let mut out = vec![Array2::from_elem((n_nodes, n_days), f64::NAN); n_traj];
    for (j, d, n, v) in rows {
        out[j][[n, d]] = v;
    }
    if out.iter().any(|a| a.iter().any(|v| v.is_nan())) {
        bail!(Data, "ensemble has duplicate or missing cells");
    }
    Ok(out)
}
