use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParameterStore};
use crate::error::{bail, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with bias correction and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub m: ParameterStore<T>,
    pub v: ParameterStore<T>,
    pub step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &ParameterStore<T>) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// `w ← w − lr·λ·w`, then the bias-corrected adaptive update.
    /// Nothing is modified when a gradient is non-finite.
    pub fn step(&mut self, params: &mut ParameterStore<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        if !grads.all_finite() {
            bail!(Numeric, "non-finite gradient at optimizer step {}", self.step + 1);
        }
        for (name, w) in params.iter() {
            match grads.get(name) {
                Some(g) if g.dim() == w.dim() => {}
                _ => bail!(Contract, "gradient for {name} is missing or misshapen"),
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let lr_t = T::of(lr);
        let decay = T::of(1.0 - lr * c.weight_decay);
        let eps = T::of(c.eps);
        let one = T::one();
        for (name, w) in params.iter_mut() {
            let g = grads.get(name).expect("checked above");
            let m = self.m.get_mut(name).expect("moments track parameters");
            m.zip_mut_with(g, |m, &g| *m = b1 * *m + (one - b1) * g);
            let v = self.v.get_mut(name).expect("moments track parameters");
            v.zip_mut_with(g, |v, &g| *v = b2 * *v + (one - b2) * g * g);
            let (m, v) = (&self.m.get(name).expect("present"), &self.v.get(name).expect("present"));
            ndarray::Zip::from(w).and(*m).and(*v).for_each(|w, &m, &v| {
                *w = *w * decay;
                *w = *w - lr_t * (m / bc1) / ((v / bc2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store(v: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("w", array![[v]]).unwrap();
        s
    }

    #[test]
    fn zero_gradient() {
        let mut p = store(2.0);
        let g = p.zeros_like();
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, &p);
        opt.step(&mut p, &g, 0.01).unwrap();
        assert_eq!(p.get("w").unwrap()[[0, 0]], 2.0);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.1, ..Default::default() }, &p);
        opt.step(&mut p, &g, 0.01).unwrap();
        assert!((p.get("w").unwrap()[[0, 0]] - 2.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(0.0);
        let g = store(1.0);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, &p);
        opt.step(&mut p, &g, 0.01).unwrap();
        assert!((p.get("w").unwrap()[[0, 0]] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut p = store(1.0);
        let g = store(f64::NAN);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        assert!(matches!(opt.step(&mut p, &g, 0.01), Err(crate::Error::Numeric(_))));
        assert_eq!(opt.step, 0);
        assert_eq!(p.get("w").unwrap()[[0, 0]], 1.0);
    }
}
