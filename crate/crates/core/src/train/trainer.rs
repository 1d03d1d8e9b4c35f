use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, RngState, TrainState};
use super::lr::LrSchedule;
use super::optim::{AdamW, AdamWConfig};
use crate::autodiff::ParameterStore;
use crate::diffusion::{draw_noise, evaluate_loss, training_loss, Denoiser, Example, NoiseDraw, NoiseSchedule, Objective};
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Training loss above this (or non-finite) aborts the run.
pub const DIVERGENCE_LOSS: f64 = 1e6;
const VALIDATION_SALT: u64 = 0x5EED_0F7A_11DA_7E00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: u64,
    pub lr_init: f64,
    pub lr_min: f64,
    pub period_0: u64,
    pub period_mult: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Epochs without a validation improvement tolerated before stopping.
    pub patience: u64,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        Self {
            batch_size: 64,
            max_epochs: 50_000,
            lr_init: 2e-2,
            lr_min: 1e-5,
            period_0: 1000,
            period_mult: 2,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            patience: 500,
            seed: 0,
            objective: Objective::EpsPred,
        }
    }
}

impl TrainConfig {
    pub fn lr_schedule(&self) -> LrSchedule {
        LrSchedule {
            lr_init: self.lr_init,
            lr_min: self.lr_min,
            period_0: self.period_0,
            period_mult: self.period_mult,
        }
    }

    pub fn adam(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            bail!(Config, "batch_size and max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            bail!(Config, "invalid optimizer constants");
        }
        if !(self.weight_decay >= 0.0) {
            bail!(Config, "weight_decay must be non-negative");
        }
        self.lr_schedule().validate()
    }
}

/// One (target, conditioning) pair in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub x0: Array2<T>,
    pub u: Array2<T>,
}

impl<T> Sample<T> {
    pub fn example(&self) -> Example<'_, T> {
        Example { x0: &self.x0, u: &self.u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// 1-based index of the finished epoch.
    pub epoch: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

/// Mini-batch AdamW loop with validation-based early stopping.
pub struct Trainer<'a, T, D: ?Sized> {
    denoiser: &'a D,
    schedule: &'a NoiseSchedule<T>,
    config: TrainConfig,
    train: &'a [Sample<T>],
    val: &'a [Sample<T>],
    val_noise: Vec<NoiseDraw<T>>,
    params: ParameterStore<T>,
    best: ParameterStore<T>,
    opt: AdamW<T>,
    rng: ChaCha8Rng,
    state: TrainState,
}

impl<'a, T: Scalar, D: Denoiser<T> + ?Sized> Trainer<'a, T, D> {
    pub fn new(
        denoiser: &'a D,
        schedule: &'a NoiseSchedule<T>,
        config: TrainConfig,
        train: &'a [Sample<T>],
        val: &'a [Sample<T>],
        init: ParameterStore<T>,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() || val.is_empty() {
            bail!(Data, "training needs nonempty train and validation sets ({} / {})", train.len(), val.len());
        }
        let val_noise = Self::validation_noise(&config, schedule, val);
        let opt = AdamW::new(config.adam(), &init);
        Ok(Self {
            denoiser,
            schedule,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            train,
            val,
            val_noise,
            best: init.clone(),
            params: init,
            opt,
            state: TrainState::default(),
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(
        denoiser: &'a D,
        schedule: &'a NoiseSchedule<T>,
        config: TrainConfig,
        train: &'a [Sample<T>],
        val: &'a [Sample<T>],
        ck: &Checkpoint,
    ) -> Result<Self> {
        let mut t = Self::new(denoiser, schedule, config, train, val, ck.store("param")?)?;
        t.best = ck.store("best")?;
        t.opt.m = ck.store("adam_m")?;
        t.opt.v = ck.store("adam_v")?;
        t.opt.step = ck.state.opt_step;
        t.rng = ck.rng.restore();
        t.state = ck.state;
        Ok(t)
    }

    fn validation_noise(config: &TrainConfig, schedule: &NoiseSchedule<T>, val: &[Sample<T>]) -> Vec<NoiseDraw<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ VALIDATION_SALT);
        let examples: Vec<Example<'_, T>> = val.iter().map(Sample::example).collect();
        draw_noise(&examples, schedule, &mut rng)
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn best_params(&self) -> &ParameterStore<T> {
        &self.best
    }

    pub fn state(&self) -> TrainState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Validation loss under a fixed noise draw, so epochs are comparable.
    pub fn validation_loss(&self, params: &ParameterStore<T>) -> Result<f64> {
        let bs = self.config.batch_size;
        let mut total = 0.0;
        for (chunk, noise) in self.val.chunks(bs).zip(self.val_noise.chunks(bs)) {
            let examples: Vec<Example<'_, T>> = chunk.iter().map(Sample::example).collect();
            let loss = evaluate_loss(self.denoiser, params, &examples, noise, self.schedule, self.config.objective)?;
            total += loss.to_f64_lossy() * chunk.len() as f64;
        }
        Ok(total / self.val.len() as f64)
    }

    pub fn run_epoch(&mut self) -> Result<EpochReport> {
        let epoch = self.state.epoch;
        let lr = self.config.lr_schedule().lr_at(epoch);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for (i, idx) in order.chunks(self.config.batch_size).enumerate() {
            let examples: Vec<Example<'_, T>> = idx.iter().map(|&j| self.train[j].example()).collect();
            let (loss, grads) = training_loss(self.denoiser, &self.params, &examples, self.schedule, &mut self.rng, self.config.objective)
                .map_err(|e| match e {
                    crate::Error::Numeric(m) => crate::Error::Numeric(format!("epoch {} batch {i}: {m}", epoch + 1)),
                    other => other,
                })?;
            let loss = loss.to_f64_lossy();
            if !(loss <= DIVERGENCE_LOSS) {
                bail!(Numeric, "training diverged at epoch {} batch {i}: loss {loss:e}", epoch + 1);
            }
            self.opt.step(&mut self.params, &grads, lr)?;
            total += loss * idx.len() as f64;
        }
        let train_loss = total / self.train.len() as f64;
        let val_loss = self.validation_loss(&self.params)?;
        if !val_loss.is_finite() {
            bail!(Numeric, "validation loss is not finite at epoch {}", epoch + 1);
        }
        let improved = val_loss < self.state.best_loss;
        self.state.epoch += 1;
        self.state.opt_step = self.opt.step;
        if improved {
            self.best = self.params.clone();
            self.state.best_loss = val_loss;
            self.state.best_epoch = self.state.epoch;
            self.state.since_best = 0;
        } else {
            self.state.since_best += 1;
        }
        Ok(EpochReport {
            epoch: self.state.epoch,
            lr,
            train_loss,
            val_loss,
            improved,
        })
    }

    pub fn should_stop(&self) -> bool {
        self.state.epoch >= self.config.max_epochs || self.state.since_best > self.config.patience
    }

    /// Runs epochs until early stopping or `max_epochs`.
    pub fn fit(&mut self, mut on_epoch: impl FnMut(&EpochReport)) -> Result<TrainState> {
        while !self.should_stop() {
            let report = self.run_epoch()?;
            on_epoch(&report);
        }
        Ok(self.state)
    }

    /// Training state plus the current, best and optimizer tensors.
    pub fn checkpoint(&self, config_text: String) -> Checkpoint {
        let mut ck = Checkpoint::new(config_text, self.state, RngState::capture(&self.rng));
        ck.insert_store("param", &self.params);
        ck.insert_store("best", &self.best);
        ck.insert_store("adam_m", &self.opt.m);
        ck.insert_store("adam_v", &self.opt.v);
        ck
    }
}
