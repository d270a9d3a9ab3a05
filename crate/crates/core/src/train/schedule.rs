//! Learning-rate schedules: linear warmup followed by cosine or polynomial decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decay {
    Cosine,
    Polynomial { power: f64 },
}

/// `warmup` and `total` share one unit: epochs for pre-training,
/// iterations for fine-tuning. Loops convert to iterations with [`ScheduleConfig::in_iterations`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warmup: u64,
    pub start_factor: f64,
    pub decay: Decay,
    pub total: u64,
    #[serde(default)]
    pub min_lr: f64,
}

impl ScheduleConfig {
    /// 20 warmup epochs from `1e-3·base`, cosine decay over 300 epochs.
    pub fn pretrain_default() -> Self {
        Self { base_lr: 0.000125, warmup: 20, start_factor: 1e-3, decay: Decay::Cosine, total: 300, min_lr: 0.0 }
    }

    /// 1500 warmup iterations from `1e-6·base`, linear decay over 10k iterations.
    pub fn finetune_default() -> Self {
        Self {
            base_lr: 1e-4,
            warmup: 1500,
            start_factor: 1e-6,
            decay: Decay::Polynomial { power: 1.0 },
            total: 10_000,
            min_lr: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return Err(Error::config("schedule.base_lr", "must be a non-negative number"));
        }
        if self.total == 0 || self.warmup >= self.total {
            return Err(Error::config(
                "schedule.warmup",
                format!("warmup {} must be below total {}", self.warmup, self.total),
            ));
        }
        if !(self.start_factor > 0.0 && self.start_factor <= 1.0) {
            return Err(Error::config("schedule.start_factor", "must lie in (0, 1]"));
        }
        if let Decay::Polynomial { power } = self.decay {
            if power.is_nan() || power <= 0.0 {
                return Err(Error::config("schedule.decay.power", "must be positive"));
            }
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.base_lr) {
            return Err(Error::config("schedule.min_lr", "must lie in [0, base_lr]"));
        }
        Ok(())
    }

    /// Same schedule with lengths multiplied by `iters_per_unit`.
    pub fn in_iterations(&self, iters_per_unit: u64) -> Self {
        Self { warmup: self.warmup * iters_per_unit, total: self.total * iters_per_unit, ..*self }
    }
}

pub fn lr_at(step: u64, sched: &ScheduleConfig) -> Result<f64> {
    sched.validate()?;
    if step > sched.total {
        return Err(Error::config("step", format!("step {step} exceeds schedule length {}", sched.total)));
    }
    let (base, w) = (sched.base_lr, sched.warmup);
    if step < w {
        let f = sched.start_factor;
        return Ok(base * (f + (1.0 - f) * step as f64 / w as f64));
    }
    let t = (step - w) as f64 / (sched.total - w) as f64;
    let span = base - sched.min_lr;
    Ok(match sched.decay {
        Decay::Cosine => sched.min_lr + span * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()),
        Decay::Polynomial { power } => sched.min_lr + span * (1.0 - t).powf(power),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_warmup_when_factor_is_one() {
        let s = ScheduleConfig { start_factor: 1.0, ..ScheduleConfig::finetune_default() };
        for step in [0, 10, 1499, 1500] {
            assert_eq!(lr_at(step, &s).unwrap(), 1e-4);
        }
    }

    #[test]
    fn boundary_is_base() {
        let s = ScheduleConfig::pretrain_default();
        assert_eq!(lr_at(20, &s).unwrap(), 0.000125);
        assert_eq!(lr_at(300, &s).unwrap(), 0.0);
    }

    #[test]
    fn invalid() {
        let s = ScheduleConfig { warmup: 300, ..ScheduleConfig::pretrain_default() };
        assert!(lr_at(0, &s).is_err());
        assert!(lr_at(301, &ScheduleConfig::pretrain_default()).is_err());
        let s = ScheduleConfig { start_factor: 0.0, ..ScheduleConfig::pretrain_default() };
        assert!(matches!(lr_at(0, &s), Err(Error::InvalidConfig { .. })));
    }
}
