use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Cosine annealing with warm restarts; period `i` lasts `period_0·period_mult^i` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_init: f64,
    pub lr_min: f64,
    pub period_0: u64,
    pub period_mult: u64,
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > self.lr_min && self.lr_min >= 0.0) {
            bail!(Config, "need lr_init > lr_min >= 0, got {} and {}", self.lr_init, self.lr_min);
        }
        if self.period_0 == 0 || self.period_mult == 0 {
            bail!(Config, "period_0 and period_mult must be positive");
        }
        Ok(())
    }

    /// Position in the current period: (period start, period length).
    pub fn period_of(&self, epoch: u64) -> (u64, u64) {
        let (mut start, mut len) = (0u64, self.period_0);
        while epoch >= start.saturating_add(len) {
            start += len;
            len = len.saturating_mul(self.period_mult);
        }
        (start, len)
    }

    pub fn lr_at(&self, epoch: u64) -> f64 {
        let (start, len) = self.period_of(epoch);
        let tau = (epoch - start) as f64 / len as f64;
        (self.lr_init - (self.lr_init - self.lr_min) * (1.0 - (std::f64::consts::PI * tau).cos()) / 2.0).max(self.lr_min)
    }
}
