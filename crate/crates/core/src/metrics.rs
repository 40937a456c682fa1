//! Run metrics, derived purely from an event log and its trace.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{EventPayload, SimEvent};
use crate::telemetry::{fault_labels, TelemetryTrace, Tick};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(TP + TN) / total`; an empty matrix scores 1.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            1.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    /// One entry per fault that affected tasks, in fault-start order.
    pub recovery_times: Vec<Tick>,
    /// Faults still open at the end of the run; their recovery time is
    /// measured up to the horizon.
    pub censored: usize,
    pub total_downtime: u64,
    pub overhead_cost: u64,
    pub confusion: Confusion,
    pub accuracy: f64,
}

impl RunMetrics {
    pub fn mean_recovery(&self) -> f64 {
        if self.recovery_times.is_empty() {
            0.0
        } else {
            self.recovery_times.iter().sum::<Tick>() as f64 / self.recovery_times.len() as f64
        }
    }
}

/// Scores warnings per `(node, tick)` window: the window is positive when the
/// node has a scheduled fault in `(t, t + horizon]`, predicted positive when
/// a Warning names the node at `t`.
pub fn confusion(events: &[SimEvent], trace: &TelemetryTrace, horizon: Tick) -> Result<Confusion> {
    let ticks = trace.ticks() as usize;
    let nodes = trace.node_count();
    let mut warned = vec![vec![false; ticks]; nodes];
    for e in events {
        if let EventPayload::Warning { node, .. } = e.payload {
            if node >= nodes {
                return Err(Error::UnknownNode(node));
            }
            if let Some(slot) = warned[node].get_mut(e.tick as usize) {
                *slot = true;
            }
        }
    }
    let mut c = Confusion::default();
    for (node, row) in warned.iter().enumerate() {
        for (w, label) in row.iter().zip(fault_labels(trace, node, horizon)) {
            match (*w, label) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(c)
}

pub fn compute_metrics(
    events: &[SimEvent],
    trace: &TelemetryTrace,
    horizon: Tick,
) -> Result<RunMetrics> {
    if horizon < 1 {
        return Err(Error::config("horizon", "must be >= 1", horizon));
    }
    let mut starts: BTreeMap<usize, Tick> = BTreeMap::new();
    let mut order = Vec::new();
    let mut done: BTreeMap<usize, Tick> = BTreeMap::new();
    let mut downtime = 0;
    let mut overhead = 0;
    for e in events {
        match &e.payload {
            EventPayload::FaultStart {
                fault, affected, ..
            } if !affected.is_empty() => {
                starts.insert(*fault, e.tick);
                order.push(*fault);
            }
            EventPayload::RecoveryDone { fault, .. } => {
                let start = starts.get(fault).ok_or_else(|| {
                    Error::Input(format!(
                        "RecoveryDone for fault {fault} without a FaultStart"
                    ))
                })?;
                done.insert(*fault, e.tick - start);
            }
            EventPayload::MetricTick {
                unavailable, cost, ..
            } => {
                if *unavailable > 0 {
                    downtime += 1;
                }
                overhead += cost;
            }
            EventPayload::Decision { cost, .. } => overhead += cost,
            _ => {}
        }
    }
    let end = trace.ticks();
    let mut censored = 0;
    let recovery_times = order
        .iter()
        .map(|f| {
            done.get(f).copied().unwrap_or_else(|| {
                censored += 1;
                end - starts[f]
            })
        })
        .collect();
    let confusion = confusion(events, trace, horizon)?;
    Ok(RunMetrics {
        recovery_times,
        censored,
        total_downtime: downtime,
        overhead_cost: overhead,
        accuracy: confusion.accuracy(),
        confusion,
    })
}
