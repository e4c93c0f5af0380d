use serde::{Deserialize, Serialize};

/// Step decay: `base * 0.5^floor(epoch / halve_every)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    /// `None` keeps the rate constant.
    pub halve_every: Option<u64>,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { base: 1e-4, halve_every: Some(100) }
    }
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self { base, halve_every: None }
    }

    pub fn lr(&self, epoch: u64) -> f64 {
        match self.halve_every {
            Some(p) if p > 0 => self.base * 0.5f64.powi((epoch / p).min(i32::MAX as u64) as i32),
            _ => self.base,
        }
    }
}
