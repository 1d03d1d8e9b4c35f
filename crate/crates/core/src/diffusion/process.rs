use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::autodiff::{BoundParams, Gradients, ParameterStore, Tape, Tensor};
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Regression target of the denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Predict the added noise ε.
    #[default]
    EpsPred,
    /// Predict the clean signal x_0.
    X0Pred,
}

/// A network mapping stacked noisy signals to its prediction (ε̂ or x̂_0).
///
/// Inputs are `(m·N) × F` signals and `(m·N) × U` conditioning for a batch of
/// `m = steps.len()` samples.
pub trait Denoiser<T: Scalar> {
    fn n_nodes(&self) -> usize;
    fn target_width(&self) -> usize;
    fn conditioning_width(&self) -> usize;

    fn predict_on(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        x_t: Tensor,
        steps: &[usize],
        u: Tensor,
    ) -> Result<Tensor>;
}

/// `x_t = √ᾱ_t x_0 + √(1 − ᾱ_t) ε`. `t = 0` returns `x_0`.
pub fn forward_sample<T: Scalar>(
    x0: &Array2<T>,
    t: usize,
    eps: &Array2<T>,
    schedule: &NoiseSchedule<T>,
) -> Result<Array2<T>> {
    if x0.dim() != eps.dim() {
        bail!(Structural, "x0 {:?} and eps {:?} differ in shape", x0.dim(), eps.dim());
    }
    let ab = schedule.alpha_bar(t)?;
    Ok(forward_with_alpha_bar(x0, ab, eps))
}

pub(crate) fn forward_with_alpha_bar<T: Scalar>(x0: &Array2<T>, alpha_bar: T, eps: &Array2<T>) -> Array2<T> {
    let a = alpha_bar.sqrt();
    let b = (T::one() - alpha_bar).sqrt();
    let mut out = x0 * a;
    out.scaled_add(b, eps);
    out
}

/// One ancestral step:
/// `x_{t−1} = (x_t − β_t/√(1 − ᾱ_t) · ε̂) / √α_t + √β_t · w`.
///
/// The final step must be noiseless; a nonzero `w` at `t = 1` is rejected.
pub fn reverse_step<T: Scalar>(
    x_t: &Array2<T>,
    t: usize,
    eps_hat: &Array2<T>,
    schedule: &NoiseSchedule<T>,
    w: &Array2<T>,
) -> Result<Array2<T>> {
    if x_t.dim() != eps_hat.dim() || x_t.dim() != w.dim() {
        bail!(Structural, "reverse step operands differ in shape");
    }
    let beta = schedule.beta(t)?;
    let alpha = schedule.alpha(t)?;
    let ab = schedule.alpha_bar(t)?;
    if t == 1 && w.iter().any(|&v| v != T::zero()) {
        bail!(Contract, "the t = 1 step takes no noise");
    }
    Ok(reverse_with(x_t, eps_hat, beta, alpha, ab, w))
}

pub(crate) fn reverse_with<T: Scalar>(
    x_t: &Array2<T>,
    eps_hat: &Array2<T>,
    beta: T,
    alpha: T,
    alpha_bar: T,
    w: &Array2<T>,
) -> Array2<T> {
    let coef = beta / (T::one() - alpha_bar).sqrt();
    let inv = T::one() / alpha.sqrt();
    let mut out = x_t.clone();
    out.scaled_add(-coef, eps_hat);
    out.mapv_inplace(|v| v * inv);
    out.scaled_add(beta.sqrt(), w);
    out
}

/// Converts a denoiser prediction into a noise estimate.
pub fn to_eps<T: Scalar>(
    prediction: Array2<T>,
    x_t: &Array2<T>,
    alpha_bar: T,
    objective: Objective,
) -> Array2<T> {
    match objective {
        Objective::EpsPred => prediction,
        Objective::X0Pred => {
            let a = alpha_bar.sqrt();
            let b = (T::one() - alpha_bar).sqrt();
            let mut eps = x_t.clone();
            eps.scaled_add(-a, &prediction);
            eps.mapv_inplace(|v| v / b);
            eps
        }
    }
}

/// One training example: clean target and its conditioning signal.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub x0: &'a Array2<T>,
    pub u: &'a Array2<T>,
}

/// Diffusion step and noise draw attached to one example.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw<T> {
    pub t: usize,
    pub eps: Array2<T>,
}

pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.sample::<f64, _>(StandardNormal)))
}

/// Draws `t ~ U{1..T}` and `ε ~ N(0, I)` for each example in order.
pub fn draw_noise<T: Scalar, R: Rng + ?Sized>(
    batch: &[Example<'_, T>],
    schedule: &NoiseSchedule<T>,
    rng: &mut R,
) -> Vec<NoiseDraw<T>> {
    batch
        .iter()
        .map(|ex| {
            let t = rng.random_range(1..=schedule.steps());
            let (r, c) = ex.x0.dim();
            NoiseDraw {
                t,
                eps: standard_normal(rng, r, c),
            }
        })
        .collect()
}

/// Records the mean squared error of the denoiser over the batch.
pub fn record_loss<T: Scalar, D: Denoiser<T> + ?Sized>(
    tape: &mut Tape<T>,
    denoiser: &D,
    params: &BoundParams,
    batch: &[Example<'_, T>],
    noise: &[NoiseDraw<T>],
    schedule: &NoiseSchedule<T>,
    objective: Objective,
) -> Result<Tensor> {
    if batch.is_empty() || batch.len() != noise.len() {
        bail!(Argument, "need one noise draw per example in a nonempty batch");
    }
    let x_t: Vec<Array2<T>> = batch
        .iter()
        .zip(noise)
        .map(|(ex, nd)| forward_sample(ex.x0, nd.t, &nd.eps, schedule))
        .collect::<Result<_>>()?;
    let stack = |parts: Vec<_>| -> Result<Array2<T>> {
        concatenate(Axis(0), &parts).map_err(|e| crate::Error::Structural(e.to_string()))
    };
    let x_t = stack(x_t.iter().map(|a| a.view()).collect())?;
    let u = stack(batch.iter().map(|e| e.u.view()).collect())?;
    let target = match objective {
        Objective::EpsPred => stack(noise.iter().map(|n| n.eps.view()).collect())?,
        Objective::X0Pred => stack(batch.iter().map(|e| e.x0.view()).collect())?,
    };
    let steps: Vec<usize> = noise.iter().map(|n| n.t).collect();
    let xv = tape.constant(x_t)?;
    let uv = tape.constant(u)?;
    let tv = tape.constant(target)?;
    let pred = denoiser.predict_on(tape, params, xv, &steps, uv)?;
    tape.mse(pred, tv)
}

/// Loss and gradients for one mini-batch with fresh noise from `rng`.
pub fn training_loss<T: Scalar, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    params: &ParameterStore<T>,
    batch: &[Example<'_, T>],
    schedule: &NoiseSchedule<T>,
    rng: &mut R,
    objective: Objective,
) -> Result<(T, Gradients<T>)> {
    let noise = draw_noise(batch, schedule, rng);
    loss_with_noise(denoiser, params, batch, &noise, schedule, objective)
}

pub fn loss_with_noise<T: Scalar, D: Denoiser<T> + ?Sized>(
    denoiser: &D,
    params: &ParameterStore<T>,
    batch: &[Example<'_, T>],
    noise: &[NoiseDraw<T>],
    schedule: &NoiseSchedule<T>,
    objective: Objective,
) -> Result<(T, Gradients<T>)> {
    let mut tape = Tape::new();
    let bound = tape.bind(params)?;
    let loss = record_loss(&mut tape, denoiser, &bound, batch, noise, schedule, objective)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        bail!(Numeric, "non-finite training loss");
    }
    let grads = tape.backward(loss)?.parameters();
    Ok((value, grads))
}

/// Loss only, no gradients.
pub fn evaluate_loss<T: Scalar, D: Denoiser<T> + ?Sized>(
    denoiser: &D,
    params: &ParameterStore<T>,
    batch: &[Example<'_, T>],
    noise: &[NoiseDraw<T>],
    schedule: &NoiseSchedule<T>,
    objective: Objective,
) -> Result<T> {
    let mut tape = Tape::new();
    let bound = tape.bind(params)?;
    let loss = record_loss(&mut tape, denoiser, &bound, batch, noise, schedule, objective)?;
    Ok(tape.scalar(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn forward_examples() {
        let s = NoiseSchedule::<f64>::cosine(10).unwrap();
        let x0 = array![[1.0, -1.0]];
        let eps = array![[2.0, 0.0]];
        assert_eq!(forward_sample(&x0, 0, &eps, &s).unwrap(), x0);
        assert_eq!(forward_with_alpha_bar(&x0, 0.0, &eps), eps);
        let x = forward_with_alpha_bar(&x0, 0.25, &eps);
        assert!((x[[0, 0]] - 2.232050807568877).abs() < 1e-12);
        assert!((x[[0, 1]] + 0.5).abs() < 1e-15);
        assert!(forward_sample(&x0, 11, &eps, &s).is_err());
    }

    #[test]
    fn reverse_examples() {
        let one: Array2<f64> = array![[1.0]];
        let x = reverse_with(&one, &array![[0.2]], 0.1, 0.9, 0.5, &array![[0.0]]);
        assert!((x[[0, 0]] - 1.0242783136894626).abs() < 1e-12);
        let y = reverse_with(&one, &array![[0.0]], 0.1, 0.9, 0.5, &array![[0.0]]);
        assert!((y[[0, 0]] - 1.0 / 0.9f64.sqrt()).abs() < 1e-15);
        let z = reverse_with(&one, &array![[0.7]], 1e-14, 1.0 - 1e-14, 0.5, &array![[0.3]]);
        assert!((z[[0, 0]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reverse_step_contract() {
        let s = NoiseSchedule::<f64>::cosine(10).unwrap();
        let x = array![[1.0]];
        assert!(reverse_step(&x, 1, &x, &s, &array![[0.5]]).is_err());
        assert!(reverse_step(&x, 1, &x, &s, &array![[0.0]]).is_ok());
        assert!(reverse_step(&x, 0, &x, &s, &array![[0.0]]).is_err());
        assert!(reverse_step(&x, 11, &x, &s, &array![[0.0]]).is_err());
    }

    #[test]
    fn x0_to_eps_inverts_forward() {
        let x0: Array2<f64> = array![[0.3, -1.2]];
        let eps = array![[0.5, 2.0]];
        let ab = 0.36;
        let xt = forward_with_alpha_bar(&x0, ab, &eps);
        let back = to_eps(x0.clone(), &xt, ab, Objective::X0Pred);
        for (a, b) in back.iter().zip(eps.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
