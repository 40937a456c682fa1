//! Ordinal health states and the exponential-decay Markov transition kernel.
//!
//! `P(s' | s) = exp(-decay * |s' - s|) / Z(s)`, with `Z(s)` summing the kernel
//! over all `S` candidate next states. Transitions less probable than the
//! anomaly floor are flagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{validate_convex, MetricVector};

/// Index on the ordinal health scale, `0` = healthiest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DiscreteState(pub usize);

impl DiscreteState {
    pub const HEALTHY: DiscreteState = DiscreteState(0);

    pub fn index(self) -> usize {
        self.0
    }

    /// The last (worst) state of an `S`-state scale.
    pub fn failed(state_count: usize) -> Self {
        DiscreteState(state_count - 1)
    }

    pub fn name(self, state_count: usize) -> String {
        const NAMES: [&str; 5] = ["Healthy", "Degraded", "Stressed", "Critical", "Failed"];
        if state_count == NAMES.len() {
            NAMES[self.0].to_string()
        } else {
            format!("S{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyConfig {
    /// Attenuation factor of the kernel.
    pub decay: f64,
    pub state_count: usize,
    pub anomaly_floor: f64,
    pub health_weights: Vec<f64>,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            decay: 1.0,
            state_count: 5,
            anomaly_floor: 0.05,
            health_weights: vec![1.0 / 6.0; 6],
        }
    }
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay.is_finite() && self.decay > 0.0) {
            return Err(Error::config("anomaly.decay", "must be > 0", self.decay));
        }
        if self.state_count < 2 {
            return Err(Error::config(
                "anomaly.state_count",
                "must be >= 2",
                self.state_count,
            ));
        }
        let bound = 1.0 / self.state_count as f64;
        if !(self.anomaly_floor >= 0.0 && self.anomaly_floor < bound) {
            return Err(Error::config(
                "anomaly.anomaly_floor",
                format!("must be in [0, 1/state_count) = [0, {bound})"),
                self.anomaly_floor,
            ));
        }
        validate_convex(&self.health_weights, "anomaly.health_weights")
    }

    pub fn failed(&self) -> DiscreteState {
        DiscreteState::failed(self.state_count)
    }
}

pub fn health_score(x: &MetricVector, cfg: &AnomalyConfig) -> Result<f64> {
    if x.values.len() != cfg.health_weights.len() {
        return Err(Error::Dimension {
            context: "discretize_state",
            expected: cfg.health_weights.len(),
            actual: x.values.len(),
        });
    }
    let h: f64 = x
        .values
        .iter()
        .zip(&cfg.health_weights)
        .map(|(v, w)| v * w)
        .sum();
    Ok(h.clamp(0.0, 1.0))
}

/// Maps a score in `[0, 1]` onto `S` equal-width bins.
pub fn bin_score(score: f64, state_count: usize) -> DiscreteState {
    let idx = (score * state_count as f64).floor() as usize;
    DiscreteState(idx.min(state_count - 1))
}

pub fn discretize_state(x: &MetricVector, cfg: &AnomalyConfig) -> Result<DiscreteState> {
    Ok(bin_score(health_score(x, cfg)?, cfg.state_count))
}

fn kernel(from: DiscreteState, to: usize, decay: f64) -> f64 {
    (-decay * from.0.abs_diff(to) as f64).exp()
}

/// Normalization constant for the row of `from`.
pub fn normalizer(from: DiscreteState, cfg: &AnomalyConfig) -> f64 {
    (0..cfg.state_count)
        .map(|s| kernel(from, s, cfg.decay))
        .sum()
}

pub fn transition_row(from: DiscreteState, cfg: &AnomalyConfig) -> Vec<f64> {
    let z = normalizer(from, cfg);
    (0..cfg.state_count)
        .map(|s| kernel(from, s, cfg.decay) / z)
        .collect()
}

pub fn transition_prob(from: DiscreteState, to: DiscreteState, cfg: &AnomalyConfig) -> f64 {
    kernel(from, to.0, cfg.decay) / normalizer(from, cfg)
}

pub fn is_anomalous(from: DiscreteState, to: DiscreteState, cfg: &AnomalyConfig) -> bool {
    transition_prob(from, to, cfg) < cfg.anomaly_floor
}
