//! Two-action controller for the distance curvature `K`.
//!
//! Each reward interval yields `+1` when accuracy improved over the previous
//! interval and `-1` otherwise. `+1` raises `K` by a fixed step, `-1` lowers
//! it. The search stops for good once the last `R` rewards sum to at most 1
//! in magnitude.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub k0: f64,
    pub step: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Reward window `R`.
    pub window: usize,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig { k0: 0.1, step: 0.1, k_min: 0.1, k_max: 2.0, window: 10 }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("bandit window R must be >= 1".into()));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!("bandit step S must be positive, got {}", self.step)));
        }
        if !(self.k_min > 0.0 && self.k_min <= self.k_max && self.k_max.is_finite()) {
            return Err(Error::Config(format!("invalid K bounds [{}, {}]", self.k_min, self.k_max)));
        }
        if !(self.k_min..=self.k_max).contains(&self.k0) {
            return Err(Error::Config(format!("K0={} outside bounds [{}, {}]", self.k0, self.k_min, self.k_max)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    k: f64,
    config: BanditConfig,
    history: VecDeque<i8>,
    /// Number of completed reward intervals.
    b: u64,
    frozen: bool,
    last_acc: Option<f64>,
    /// Bumped every time `k` changes.
    version: u64,
}

/// One row of the bandit trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub b: u64,
    pub k: f64,
    pub reward: i8,
    pub frozen: bool,
}

impl BanditState {
    pub fn new(config: BanditConfig) -> Result<Self> {
        config.validate()?;
        Ok(BanditState {
            k: config.k0,
            config,
            history: VecDeque::with_capacity(config.window),
            b: 0,
            frozen: false,
            last_acc: None,
            version: 0,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn config(&self) -> &BanditConfig {
        &self.config
    }

    pub fn history(&self) -> impl Iterator<Item = i8> + '_ {
        self.history.iter().copied()
    }

    /// Reward for the interval that just ended. The first interval always
    /// earns `+1`.
    pub fn reward(&mut self, acc_now: f64) -> Result<i8> {
        if self.frozen {
            return Err(Error::Internal("reward requested from a frozen bandit".into()));
        }
        if !(0.0..=1.0).contains(&acc_now) {
            return Err(Error::Config(format!("accuracy {acc_now} outside [0, 1]")));
        }
        let r = match self.last_acc {
            Some(prev) if acc_now <= prev => -1,
            _ => 1,
        };
        self.last_acc = Some(acc_now);
        Ok(r)
    }

    /// Applies the action for reward `r`. No-op once frozen.
    pub fn step(&mut self, r: i8) {
        if self.frozen {
            return;
        }
        let delta = if r > 0 { self.config.step } else { -self.config.step };
        // snap away accumulated rounding so K stays on the step grid
        let next = (((self.k + delta) * 1e9).round() / 1e9).clamp(self.config.k_min, self.config.k_max);
        if next != self.k {
            self.k = next;
            self.version += 1;
        }
        if self.history.len() == self.config.window {
            self.history.pop_front();
        }
        self.history.push_back(r.signum());
        self.b += 1;
        self.frozen = self.terminated();
    }

    /// True once the window is full and its rewards sum to at most 1 in
    /// magnitude.
    pub fn terminated(&self) -> bool {
        self.history.len() == self.config.window && self.history.iter().map(|&r| r as i64).sum::<i64>().abs() <= 1
    }

    /// Reward then step, returning the trace row for this interval.
    pub fn observe(&mut self, acc_now: f64) -> Result<TraceRow> {
        let reward = self.reward(acc_now)?;
        self.step(reward);
        Ok(TraceRow { b: self.b, k: self.k, reward, frozen: self.frozen })
    }
}
