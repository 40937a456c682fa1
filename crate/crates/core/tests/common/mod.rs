#![allow(dead_code)]

use ftsim_core::config::ScenarioConfig;
use ftsim_core::events::{EventPayload, SimEvent};
use ftsim_core::telemetry::{
    FaultEventSpec, FaultKind, MetricVector, NodeId, TelemetryTrace, Tick, DEFAULT_INDICATORS,
};

pub const CALM: [f64; 6] = [0.05, 0.05, 0.1, 0.1, 0.05, 0.05];

/// A trace whose telemetry is flat at `CALM` with the given fault schedule.
pub fn flat_trace(nodes: usize, ticks: Tick, mut faults: Vec<FaultEventSpec>) -> TelemetryTrace {
    faults.sort_by_key(|f| (f.tick, f.node));
    TelemetryTrace {
        seed: 0,
        indicators: DEFAULT_INDICATORS.iter().map(|s| s.to_string()).collect(),
        metrics: (0..nodes)
            .map(|_| {
                (0..ticks)
                    .map(|t| MetricVector::new(t, CALM.to_vec()).unwrap())
                    .collect()
            })
            .collect(),
        faults,
    }
}

pub fn hardware(tick: Tick, node: NodeId) -> FaultEventSpec {
    FaultEventSpec {
        tick,
        kind: FaultKind::HardwareFailure,
        node,
        severity: 1.0,
        duration: 0,
    }
}

pub fn transient(
    tick: Tick,
    node: NodeId,
    kind: FaultKind,
    severity: f64,
    duration: Tick,
) -> FaultEventSpec {
    FaultEventSpec {
        tick,
        kind,
        node,
        severity,
        duration,
    }
}

/// Default scenario shrunk to the flat trace's size.
pub fn small_config(nodes: usize, ticks: Tick) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.telemetry.nodes = nodes;
    cfg.telemetry.ticks = ticks;
    cfg
}

pub fn count<F: Fn(&EventPayload) -> bool>(events: &[SimEvent], f: F) -> usize {
    events.iter().filter(|e| f(&e.payload)).count()
}
