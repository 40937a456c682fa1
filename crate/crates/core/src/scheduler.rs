//! Adaptive checkpoint rate: `alpha * P(fault) + beta * load`, mapped to a
//! clamped inter-checkpoint interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::FaultProbability;
use crate::telemetry::{SystemLoad, Tick};

/// Checkpoints per tick.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct CheckpointRate(f64);

impl CheckpointRate {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Numeric("checkpoint rate"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub min_interval: Tick,
    pub max_interval: Tick,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            min_interval: 5,
            max_interval: 200,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config("scheduler.alpha", "must be >= 0", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("scheduler.beta", "must be >= 0", self.beta));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::config(
                "scheduler.alpha+beta",
                "must be > 0",
                self.alpha + self.beta,
            ));
        }
        if self.min_interval < 1 {
            return Err(Error::config(
                "scheduler.min_interval",
                "must be >= 1",
                self.min_interval,
            ));
        }
        if self.max_interval < self.min_interval {
            return Err(Error::config(
                "scheduler.max_interval",
                "must be >= min_interval",
                self.max_interval,
            ));
        }
        Ok(())
    }
}

pub fn checkpoint_rate(
    p: FaultProbability,
    load: SystemLoad,
    cfg: &SchedulerConfig,
) -> CheckpointRate {
    CheckpointRate(cfg.alpha * p.value() + cfg.beta * load.value())
}

/// `clamp(round(1 / rate), min, max)`; a zero rate maps to `max_interval`.
pub fn rate_to_interval(rate: CheckpointRate, cfg: &SchedulerConfig) -> Tick {
    if rate.value() <= 0.0 {
        return cfg.max_interval;
    }
    let period = (1.0 / rate.value()).round();
    if period >= cfg.max_interval as f64 {
        cfg.max_interval
    } else {
        (period as Tick).clamp(cfg.min_interval, cfg.max_interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: f64) -> FaultProbability {
        FaultProbability::new(v).unwrap()
    }

    fn load(v: f64) -> SystemLoad {
        SystemLoad::new(v).unwrap()
    }

    #[test]
    fn rate_examples() {
        let cfg = SchedulerConfig::default();
        assert_eq!(checkpoint_rate(p(0.0), load(0.0), &cfg).value(), 0.0);
        let cfg = SchedulerConfig {
            alpha: 2.0,
            beta: 1.0,
            ..SchedulerConfig::default()
        };
        assert_eq!(checkpoint_rate(p(0.5), load(0.5), &cfg).value(), 1.5);
    }

    #[test]
    fn interval_examples() {
        let cfg = SchedulerConfig {
            min_interval: 1,
            max_interval: 100,
            ..SchedulerConfig::default()
        };
        assert_eq!(
            rate_to_interval(CheckpointRate::new(0.0).unwrap(), &cfg),
            100
        );
        assert_eq!(rate_to_interval(CheckpointRate::new(1.5).unwrap(), &cfg), 1);
        let cfg = SchedulerConfig {
            min_interval: 1,
            max_interval: 50,
            ..SchedulerConfig::default()
        };
        assert_eq!(
            rate_to_interval(CheckpointRate::new(0.01).unwrap(), &cfg),
            50
        );
    }

    #[test]
    fn config_validation() {
        assert!(SchedulerConfig::default().validate().is_ok());
        let bad = SchedulerConfig {
            min_interval: 10,
            max_interval: 5,
            ..SchedulerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SchedulerConfig {
            alpha: 0.0,
            beta: 0.0,
            ..SchedulerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn rate_is_affine_and_monotone(
            alpha in 0.0..10.0f64, beta in 0.0..10.0f64,
            p1 in 0.0..=1.0f64, p2 in 0.0..=1.0f64, l in 0.0..=1.0f64,
        ) {
            let cfg = SchedulerConfig { alpha, beta, ..SchedulerConfig::default() };
            let r1 = checkpoint_rate(p(p1), load(l), &cfg).value();
            prop_assert_eq!(r1, alpha * p1 + beta * l);
            let r2 = checkpoint_rate(p(p2), load(l), &cfg).value();
            if p1 <= p2 { prop_assert!(r1 <= r2); }
        }

        #[test]
        fn interval_clamped_and_nonincreasing(
            a in 0.0..5.0f64, b in 0.0..5.0f64, lo in 1u64..50, span in 0u64..300,
        ) {
            let cfg = SchedulerConfig { min_interval: lo, max_interval: lo + span, ..SchedulerConfig::default() };
            let (small, large) = if a <= b { (a, b) } else { (b, a) };
            let i_small = rate_to_interval(CheckpointRate::new(small).unwrap(), &cfg);
            let i_large = rate_to_interval(CheckpointRate::new(large).unwrap(), &cfg);
            prop_assert!(i_large <= i_small);
            for i in [i_small, i_large] {
                prop_assert!(i >= cfg.min_interval && i <= cfg.max_interval);
            }
        }
    }
}
