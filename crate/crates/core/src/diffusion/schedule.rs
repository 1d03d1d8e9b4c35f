use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::scalar::Scalar;

const BETA_MIN_CLIP: f64 = 1e-8;
const BETA_MAX_CLIP: f64 = 0.999;
const COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Cosine,
    Linear { beta_min: f64, beta_max: f64 },
}

impl Default for ScheduleKind {
    fn default() -> Self {
        Self::Cosine
    }
}

/// `β_t`, `α_t = 1 − β_t` and `ᾱ_t = ∏ α_i` for t = 1..=T.
///
/// `ᾱ_0 = 1` by convention; `ᾱ` is always the running product of the
/// stored (clipped) `α`, so `ᾱ_t / ᾱ_{t−1} = α_t` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    betas: Vec<T>,
    alphas: Vec<T>,
    alpha_bars: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    pub fn build(kind: ScheduleKind, steps: usize) -> Result<Self> {
        match kind {
            ScheduleKind::Cosine => Self::cosine(steps),
            ScheduleKind::Linear { beta_min, beta_max } => Self::linear(steps, beta_min, beta_max),
        }
    }

    /// Cosine schedule: `ᾱ_t = f(t)/f(0)` with
    /// `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`, `s = 0.008`, and
    /// `β_t = 1 − ᾱ_t/ᾱ_{t−1}` clipped to `[1e-8, 0.999]`.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 2 {
            bail!(Argument, "cosine schedule needs T >= 2, got {steps}");
        }
        let total = steps as f64;
        let f = |t: f64| {
            let phase = ((t / total + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) * std::f64::consts::FRAC_PI_2;
            phase.cos().powi(2)
        };
        let f0 = f(0.0);
        let betas = (1..=steps)
            .map(|t| {
                let prev = f((t - 1) as f64) / f0;
                let cur = f(t as f64) / f0;
                1.0 - cur / prev
            })
            .collect();
        Ok(Self::from_betas(betas))
    }

    /// Betas linear in t from `beta_min` (t = 1) to `beta_max` (t = T).
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 1 {
            bail!(Argument, "linear schedule needs T >= 1");
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            bail!(Argument, "need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}");
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Ok(Self::from_betas(betas))
    }

    fn from_betas(raw: Vec<f64>) -> Self {
        let mut betas = Vec::with_capacity(raw.len());
        let mut alphas = Vec::with_capacity(raw.len());
        let mut alpha_bars = Vec::with_capacity(raw.len());
        let mut running = 1.0f64;
        for b in raw {
            let b = b.clamp(BETA_MIN_CLIP, BETA_MAX_CLIP);
            let a = 1.0 - b;
            running *= a;
            betas.push(T::of(b));
            alphas.push(T::of(a));
            alpha_bars.push(T::of(running));
        }
        Self {
            betas,
            alphas,
            alpha_bars,
        }
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            bail!(Argument, "diffusion step {t} outside [1, {}]", self.steps());
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<T> {
        self.check(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<T> {
        self.check(t)?;
        Ok(self.alphas[t - 1])
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<T> {
        if t == 0 {
            return Ok(T::one());
        }
        self.check(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bars
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }
}
