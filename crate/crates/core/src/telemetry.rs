//! Synthetic telemetry traces with ground-truth fault schedules.
//!
//! A trace is a pure function of `(TelemetryConfig, seed)`. Each node reports
//! `n` indicators normalized to `[0, 1]` every tick. Faults arrive as per-node,
//! per-kind Poisson processes modulated by cluster-wide burst windows, and the
//! indicators named in the precursor map ramp up linearly over the
//! `precursor_window` ticks before each fault.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type Tick = u64;

pub const DEFAULT_INDICATORS: [&str; 6] = [
    "cpu_util",
    "mem_util",
    "net_latency_norm",
    "disk_io_norm",
    "error_rate",
    "queue_depth_norm",
];

/// One node's indicator readings at one tick. Every value lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVector {
    pub tick: Tick,
    pub values: Vec<f64>,
}

impl MetricVector {
    pub fn new(tick: Tick, values: Vec<f64>) -> Result<Self> {
        if values
            .iter()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::Input(format!(
                "metric values must be finite and in [0,1] at tick {tick}"
            )));
        }
        Ok(Self { tick, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scalar system load in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct SystemLoad(f64);

impl SystemLoad {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::config("load", "must be finite and in [0,1]", value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    HardwareFailure,
    NetworkInstability,
    ResourceOverload,
}

impl FaultKind {
    pub const ALL: [FaultKind; 3] = [
        FaultKind::HardwareFailure,
        FaultKind::NetworkInstability,
        FaultKind::ResourceOverload,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::HardwareFailure => "HardwareFailure",
            FaultKind::NetworkInstability => "NetworkInstability",
            FaultKind::ResourceOverload => "ResourceOverload",
        }
    }

    pub fn is_transient(self) -> bool {
        !matches!(self, FaultKind::HardwareFailure)
    }
}

impl std::str::FromStr for FaultKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::parse("fault kind", format!("unknown kind {s:?}")))
    }
}

/// A scheduled fault. `duration` is zero for hardware failures, which need an
/// explicit recovery instead of expiring.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultEventSpec {
    pub tick: Tick,
    pub kind: FaultKind,
    pub node: NodeId,
    pub severity: f64,
    pub duration: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryTrace {
    pub seed: u64,
    pub indicators: Vec<String>,
    /// `metrics[node][tick]`
    pub metrics: Vec<Vec<MetricVector>>,
    /// Sorted by tick, ties broken by node id then kind.
    pub faults: Vec<FaultEventSpec>,
}

impl TelemetryTrace {
    pub fn node_count(&self) -> usize {
        self.metrics.len()
    }

    pub fn ticks(&self) -> Tick {
        self.metrics.first().map_or(0, |m| m.len() as Tick)
    }

    pub fn metric(&self, node: NodeId, tick: Tick) -> &MetricVector {
        &self.metrics[node][tick as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub features: MetricVector,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindWeights {
    pub hardware: f64,
    pub network: f64,
    pub overload: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        Self {
            hardware: 1.0,
            network: 1.0,
            overload: 1.0,
        }
    }
}

impl KindWeights {
    fn get(&self, kind: FaultKind) -> f64 {
        match kind {
            FaultKind::HardwareFailure => self.hardware,
            FaultKind::NetworkInstability => self.network,
            FaultKind::ResourceOverload => self.overload,
        }
    }

    fn total(&self) -> f64 {
        self.hardware + self.network + self.overload
    }
}

/// Indicators that ramp before each fault kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecursorMap {
    pub hardware: Vec<String>,
    pub network: Vec<String>,
    pub overload: Vec<String>,
}

impl Default for PrecursorMap {
    fn default() -> Self {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            hardware: names(&["disk_io_norm", "error_rate"]),
            network: names(&["net_latency_norm", "error_rate"]),
            overload: names(&["cpu_util", "mem_util", "queue_depth_norm"]),
        }
    }
}

impl PrecursorMap {
    fn get(&self, kind: FaultKind) -> &[String] {
        match kind {
            FaultKind::HardwareFailure => &self.hardware,
            FaultKind::NetworkInstability => &self.network,
            FaultKind::ResourceOverload => &self.overload,
        }
    }
}

/// Cluster-wide high-load windows: fault arrivals are multiplied by
/// `multiplier` and the `boosted` indicators rise by `load_boost`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstConfig {
    /// Long-run fraction of ticks spent in burst mode.
    pub fraction: f64,
    pub multiplier: f64,
    pub mean_length: f64,
    pub load_boost: f64,
    pub boosted: Vec<String>,
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            multiplier: 3.0,
            mean_length: 100.0,
            load_boost: 0.2,
            boosted: vec![
                "cpu_util".into(),
                "mem_util".into(),
                "queue_depth_norm".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetryConfig {
    pub nodes: usize,
    pub ticks: Tick,
    pub indicators: Vec<String>,
    /// Calm-period level of each indicator.
    pub baseline: Vec<f64>,
    pub noise_sigma: f64,
    /// Weights of the convex combination that defines system load.
    pub load_weights: Vec<f64>,
    /// Mean cluster-wide fault arrivals per tick, bursts included.
    pub fault_rate: f64,
    pub kind_weights: KindWeights,
    pub precursor_window: Tick,
    pub ramp_amplitude: f64,
    pub precursors: PrecursorMap,
    pub burst: BurstConfig,
    pub mean_transient_duration: f64,
    pub severity_min: f64,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self {
            nodes: 8,
            ticks: 10_000,
            indicators: DEFAULT_INDICATORS.iter().map(|s| s.to_string()).collect(),
            baseline: vec![0.05, 0.05, 0.1, 0.1, 0.05, 0.05],
            noise_sigma: 0.05,
            load_weights: vec![0.4, 0.3, 0.0, 0.0, 0.0, 0.3],
            fault_rate: 0.006,
            kind_weights: KindWeights::default(),
            precursor_window: 10,
            ramp_amplitude: 0.6,
            precursors: PrecursorMap::default(),
            burst: BurstConfig::default(),
            mean_transient_duration: 20.0,
            severity_min: 0.3,
        }
    }
}

fn check(ok: bool, field: &str, constraint: &str, value: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, constraint, value))
    }
}

pub(crate) fn validate_convex(weights: &[f64], field: &str) -> Result<()> {
    check(
        weights.iter().all(|w| w.is_finite() && *w >= 0.0),
        field,
        "must be nonnegative",
        format!("{weights:?}"),
    )?;
    let sum: f64 = weights.iter().sum();
    check((sum - 1.0).abs() <= 1e-9, field, "must sum to 1", sum)
}

impl TelemetryConfig {
    pub fn indicator_count(&self) -> usize {
        self.indicators.len()
    }

    pub fn indicator_index(&self, name: &str) -> Option<usize> {
        self.indicators.iter().position(|i| i == name)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.indicators.len();
        check(
            self.nodes >= 1,
            "telemetry.nodes",
            "must be >= 1",
            self.nodes,
        )?;
        check(
            self.ticks >= 1,
            "telemetry.ticks",
            "must be >= 1",
            self.ticks,
        )?;
        check(
            n >= 1,
            "telemetry.indicators",
            "must name at least one indicator",
            n,
        )?;
        check(
            self.baseline.len() == n,
            "telemetry.baseline",
            "length must equal the indicator count",
            self.baseline.len(),
        )?;
        check(
            self.baseline.iter().all(|b| (0.0..=1.0).contains(b)),
            "telemetry.baseline",
            "values must be in [0,1]",
            format!("{:?}", self.baseline),
        )?;
        check(
            self.load_weights.len() == n,
            "telemetry.load_weights",
            "length must equal the indicator count",
            self.load_weights.len(),
        )?;
        validate_convex(&self.load_weights, "telemetry.load_weights")?;
        check(
            self.noise_sigma.is_finite() && self.noise_sigma >= 0.0,
            "telemetry.noise_sigma",
            "must be >= 0",
            self.noise_sigma,
        )?;
        check(
            self.fault_rate.is_finite() && self.fault_rate >= 0.0,
            "telemetry.fault_rate",
            "must be >= 0",
            self.fault_rate,
        )?;
        let kw = &self.kind_weights;
        check(
            [kw.hardware, kw.network, kw.overload]
                .iter()
                .all(|w| w.is_finite() && *w >= 0.0)
                && kw.total() > 0.0,
            "telemetry.kind_weights",
            "must be nonnegative with a positive sum",
            format!("{kw:?}"),
        )?;
        check(
            self.ramp_amplitude.is_finite() && (0.0..=1.0).contains(&self.ramp_amplitude),
            "telemetry.ramp_amplitude",
            "must be in [0,1]",
            self.ramp_amplitude,
        )?;
        for kind in FaultKind::ALL {
            for name in self.precursors.get(kind) {
                check(
                    self.indicator_index(name).is_some(),
                    "telemetry.precursors",
                    "must name declared indicators",
                    name,
                )?;
            }
        }
        let b = &self.burst;
        check(
            (0.0..1.0).contains(&b.fraction),
            "telemetry.burst.fraction",
            "must be in [0,1)",
            b.fraction,
        )?;
        check(
            b.multiplier.is_finite() && b.multiplier >= 1.0,
            "telemetry.burst.multiplier",
            "must be >= 1",
            b.multiplier,
        )?;
        check(
            b.mean_length.is_finite() && b.mean_length >= 1.0,
            "telemetry.burst.mean_length",
            "must be >= 1",
            b.mean_length,
        )?;
        check(
            b.load_boost.is_finite() && (0.0..=1.0).contains(&b.load_boost),
            "telemetry.burst.load_boost",
            "must be in [0,1]",
            b.load_boost,
        )?;
        for name in &b.boosted {
            check(
                self.indicator_index(name).is_some(),
                "telemetry.burst.boosted",
                "must name declared indicators",
                name,
            )?;
        }
        check(
            self.mean_transient_duration.is_finite() && self.mean_transient_duration >= 1.0,
            "telemetry.mean_transient_duration",
            "must be >= 1",
            self.mean_transient_duration,
        )?;
        check(
            self.severity_min > 0.0 && self.severity_min <= 1.0,
            "telemetry.severity_min",
            "must be in (0,1]",
            self.severity_min,
        )
    }
}

const STREAM_BURST: u64 = 1;
const STREAM_FAULTS: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Two-state burst process; `true` marks a burst tick.
fn burst_mask(cfg: &TelemetryConfig, seed: u64) -> Vec<bool> {
    let b = &cfg.burst;
    let mut mask = vec![false; cfg.ticks as usize];
    if b.fraction <= 0.0 {
        return mask;
    }
    let mut rng = rng_for(seed, STREAM_BURST);
    let p_end = 1.0 / b.mean_length;
    let p_start = (b.fraction * p_end / (1.0 - b.fraction)).min(1.0);
    let mut in_burst = false;
    for slot in mask.iter_mut() {
        let u: f64 = rng.random();
        in_burst = if in_burst { u >= p_end } else { u < p_start };
        *slot = in_burst;
    }
    mask
}

fn generate_faults(cfg: &TelemetryConfig, bursts: &[bool], seed: u64) -> Vec<FaultEventSpec> {
    let mut faults = Vec::new();
    if cfg.fault_rate <= 0.0 {
        return faults;
    }
    let mut rng = rng_for(seed, STREAM_FAULTS);
    let burst = &cfg.burst;
    // Normalize so the long-run mean rate, bursts included, equals fault_rate.
    let calm_rate = cfg.fault_rate / (1.0 + burst.fraction * (burst.multiplier - 1.0));
    let duration = Geometric::new(1.0 / cfg.mean_transient_duration).expect("validated");
    let horizon = cfg.ticks as f64;
    for node in 0..cfg.nodes {
        for kind in FaultKind::ALL {
            let share = cfg.kind_weights.get(kind) / cfg.kind_weights.total();
            let base = calm_rate * share / cfg.nodes as f64;
            if base <= 0.0 {
                continue;
            }
            let peak = base * burst.multiplier;
            let gap = Exp::new(peak).expect("positive rate");
            let mut t = 0.0;
            loop {
                t += gap.sample(&mut rng);
                if t >= horizon {
                    break;
                }
                let tick = t as Tick;
                let accept: f64 = rng.random();
                let rate = if bursts[tick as usize] { peak } else { base };
                if accept * peak >= rate {
                    continue;
                }
                let severity = rng.random_range(cfg.severity_min..=1.0);
                let duration = if kind.is_transient() {
                    1 + duration.sample(&mut rng)
                } else {
                    0
                };
                faults.push(FaultEventSpec {
                    tick,
                    kind,
                    node,
                    severity,
                    duration,
                });
            }
        }
    }
    faults.sort_by_key(|f| (f.tick, f.node, f.kind));
    faults
}

/// Generates a trace. Pure in `(cfg, seed)`.
pub fn generate_trace(cfg: &TelemetryConfig, seed: u64) -> Result<TelemetryTrace> {
    cfg.validate()?;
    let n = cfg.indicator_count();
    let ticks = cfg.ticks as usize;
    let bursts = burst_mask(cfg, seed);
    let faults = generate_faults(cfg, &bursts, seed);

    // Deterministic signal: baseline + burst boost + precursor ramps.
    let mut signal = vec![vec![cfg.baseline.clone(); ticks]; cfg.nodes];
    let boosted: Vec<usize> = cfg
        .burst
        .boosted
        .iter()
        .filter_map(|name| cfg.indicator_index(name))
        .collect();
    for node_signal in signal.iter_mut() {
        for (t, row) in node_signal.iter_mut().enumerate() {
            if bursts[t] {
                for &i in &boosted {
                    row[i] += cfg.burst.load_boost;
                }
            }
        }
    }
    let window = cfg.precursor_window;
    for fault in &faults {
        let amplitude = cfg.ramp_amplitude * (0.5 + 0.5 * fault.severity);
        let indices: Vec<usize> = cfg
            .precursors
            .get(fault.kind)
            .iter()
            .filter_map(|name| cfg.indicator_index(name))
            .collect();
        for lead in 1..=window {
            let Some(t) = fault.tick.checked_sub(lead) else {
                break;
            };
            let ramp = amplitude * (window - lead + 1) as f64 / window as f64;
            let row = &mut signal[fault.node][t as usize];
            for &i in &indices {
                row[i] += ramp;
            }
        }
    }

    let mut rng = rng_for(seed, STREAM_NOISE);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("validated");
    let mut metrics = Vec::with_capacity(cfg.nodes);
    for node_signal in signal {
        let mut series = Vec::with_capacity(ticks);
        for (t, row) in node_signal.into_iter().enumerate() {
            let values = row
                .into_iter()
                .map(|v| {
                    let eps = if cfg.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (v + eps).clamp(0.0, 1.0)
                })
                .collect::<Vec<_>>();
            debug_assert_eq!(values.len(), n);
            series.push(MetricVector {
                tick: t as Tick,
                values,
            });
        }
        metrics.push(series);
    }

    Ok(TelemetryTrace {
        seed,
        indicators: cfg.indicators.clone(),
        metrics,
        faults,
    })
}

/// Convex combination of indicators.
pub fn system_load(x: &MetricVector, load_weights: &[f64]) -> Result<SystemLoad> {
    if x.values.len() != load_weights.len() {
        return Err(Error::Dimension {
            context: "system_load",
            expected: load_weights.len(),
            actual: x.values.len(),
        });
    }
    let value: f64 = x.values.iter().zip(load_weights).map(|(v, w)| v * w).sum();
    SystemLoad::new(value.clamp(0.0, 1.0))
}

/// Labels every tick of `node`: true iff the node has a scheduled fault in
/// `(t, t + horizon]`.
pub fn label_windows(
    trace: &TelemetryTrace,
    node: NodeId,
    horizon: Tick,
) -> Result<Vec<LabeledWindow>> {
    if horizon < 1 {
        return Err(Error::config("horizon", "must be >= 1", horizon));
    }
    let series = trace.metrics.get(node).ok_or(Error::UnknownNode(node))?;
    let labels = fault_labels(trace, node, horizon);
    Ok(series
        .iter()
        .zip(labels)
        .map(|(features, label)| LabeledWindow {
            features: features.clone(),
            label,
        })
        .collect())
}

/// Per-tick labels for one node without cloning the features.
pub(crate) fn fault_labels(trace: &TelemetryTrace, node: NodeId, horizon: Tick) -> Vec<bool> {
    let ticks = trace.ticks();
    let mut labels = vec![false; ticks as usize];
    for fault in trace.faults.iter().filter(|f| f.node == node) {
        let lo = fault.tick.saturating_sub(horizon);
        for t in lo..fault.tick.min(ticks) {
            labels[t as usize] = true;
        }
    }
    labels
}

const TRACE_MAGIC: &str = "ftsim-trace v1";

/// Writes the line-oriented trace format:
///
/// ```text
/// ftsim-trace v1
/// seed <u64>
/// nodes <count>
/// ticks <count>
/// indicators <name>,<name>,...
/// [metrics]
/// tick,node,<indicator columns in declared order>
/// <one row per (tick, node), tick-major>
/// [faults]
/// tick,node,kind,severity,duration
/// <one row per scheduled fault, schedule order>
/// ```
pub fn write_trace<W: Write>(trace: &TelemetryTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_MAGIC}")?;
    writeln!(out, "seed {}", trace.seed)?;
    writeln!(out, "nodes {}", trace.node_count())?;
    writeln!(out, "ticks {}", trace.ticks())?;
    writeln!(out, "indicators {}", trace.indicators.join(","))?;
    writeln!(out, "[metrics]")?;
    writeln!(out, "tick,node,{}", trace.indicators.join(","))?;
    let mut line = String::new();
    for t in 0..trace.ticks() {
        for node in 0..trace.node_count() {
            line.clear();
            let _ = write!(line, "{t},{node}");
            for v in &trace.metric(node, t).values {
                let _ = write!(line, ",{v}");
            }
            writeln!(out, "{line}")?;
        }
    }
    writeln!(out, "[faults]")?;
    writeln!(out, "tick,node,kind,severity,duration")?;
    for f in &trace.faults {
        writeln!(
            out,
            "{},{},{},{},{}",
            f.tick,
            f.node,
            f.kind.as_str(),
            f.severity,
            f.duration
        )?;
    }
    Ok(())
}

fn header_value<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::parse("trace", format!("missing {key} line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::parse("trace", format!("expected {key:?}, got {line:?}")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse("trace", format!("bad {what}: {s:?}")))
}

pub fn read_trace<R: BufRead>(input: R) -> Result<TelemetryTrace> {
    let lines: Vec<String> = input
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::parse("trace", e))?;
    let mut it = lines.iter().map(String::as_str);
    if it.next() != Some(TRACE_MAGIC) {
        return Err(Error::parse("trace", "missing format header"));
    }
    let seed: u64 = parse_num(header_value(it.next(), "seed")?, "seed")?;
    let nodes: usize = parse_num(header_value(it.next(), "nodes")?, "nodes")?;
    let ticks: usize = parse_num(header_value(it.next(), "ticks")?, "ticks")?;
    let indicators: Vec<String> = header_value(it.next(), "indicators")?
        .split(',')
        .map(str::to_string)
        .collect();
    if it.next() != Some("[metrics]") {
        return Err(Error::parse("trace", "missing [metrics] section"));
    }
    it.next(); // column header
    let mut metrics = vec![Vec::with_capacity(ticks); nodes];
    for t in 0..ticks {
        for (node, series) in metrics.iter_mut().enumerate() {
            let line = it
                .next()
                .ok_or_else(|| Error::parse("trace", "truncated metrics section"))?;
            let mut cols = line.split(',');
            let tick: usize = parse_num(cols.next().unwrap_or(""), "tick")?;
            let row_node: usize = parse_num(cols.next().unwrap_or(""), "node")?;
            if tick != t || row_node != node {
                return Err(Error::parse(
                    "trace",
                    format!("row out of order: tick {tick} node {row_node}"),
                ));
            }
            let values = cols
                .map(|c| parse_num::<f64>(c, "value"))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != indicators.len() {
                return Err(Error::Dimension {
                    context: "trace row",
                    expected: indicators.len(),
                    actual: values.len(),
                });
            }
            series.push(MetricVector::new(tick as Tick, values)?);
        }
    }
    if it.next() != Some("[faults]") {
        return Err(Error::parse("trace", "missing [faults] section"));
    }
    it.next();
    let mut faults = Vec::new();
    for line in it.filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::parse("trace", format!("bad fault row {line:?}")));
        }
        let node: usize = parse_num(cols[1], "node")?;
        if node >= nodes {
            return Err(Error::UnknownNode(node));
        }
        faults.push(FaultEventSpec {
            tick: parse_num(cols[0], "tick")?,
            node,
            kind: cols[2].parse()?,
            severity: parse_num(cols[3], "severity")?,
            duration: parse_num(cols[4], "duration")?,
        });
    }
    Ok(TelemetryTrace {
        seed,
        indicators,
        metrics,
        faults,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(fault_rate: f64) -> TelemetryConfig {
        TelemetryConfig {
            nodes: 3,
            ticks: 400,
            fault_rate,
            ..TelemetryConfig::default()
        }
    }

    #[test]
    fn zero_rate_has_no_faults() {
        let trace = generate_trace(&small(0.0), 7).unwrap();
        assert!(trace.faults.is_empty());
        assert_eq!(trace.node_count(), 3);
        assert_eq!(trace.ticks(), 400);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = small(0.05);
        assert_eq!(
            generate_trace(&cfg, 11).unwrap(),
            generate_trace(&cfg, 11).unwrap()
        );
        assert_ne!(
            generate_trace(&cfg, 11).unwrap(),
            generate_trace(&cfg, 12).unwrap()
        );
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut cfg = small(0.0);
        cfg.nodes = 0;
        assert!(matches!(generate_trace(&cfg, 1), Err(Error::Config { .. })));
        let mut cfg = small(0.0);
        cfg.ticks = 0;
        assert!(matches!(generate_trace(&cfg, 1), Err(Error::Config { .. })));
        let mut cfg = small(0.0);
        cfg.precursors.hardware = vec!["gpu_temp".into()];
        assert!(generate_trace(&cfg, 1).is_err());
    }

    #[test]
    fn trace_invariants_hold() {
        let cfg = small(0.08);
        let trace = generate_trace(&cfg, 3).unwrap();
        assert!(!trace.faults.is_empty());
        for series in &trace.metrics {
            for (t, m) in series.iter().enumerate() {
                assert_eq!(m.tick, t as Tick);
                assert_eq!(m.len(), 6);
                assert!(m
                    .values
                    .iter()
                    .all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            }
        }
        for pair in trace.faults.windows(2) {
            assert!((pair[0].tick, pair[0].node) <= (pair[1].tick, pair[1].node));
        }
        for f in &trace.faults {
            assert!(f.tick < cfg.ticks && f.node < cfg.nodes);
            assert!(f.severity > 0.0 && f.severity <= 1.0);
            assert_eq!(f.duration == 0, f.kind == FaultKind::HardwareFailure);
        }
    }

    #[test]
    fn precursors_ramp_before_faults() {
        let mut cfg = small(0.03);
        cfg.noise_sigma = 0.0;
        cfg.burst.fraction = 0.0;
        let trace = generate_trace(&cfg, 5).unwrap();
        let f = trace
            .faults
            .iter()
            .find(|f| f.kind == FaultKind::HardwareFailure && f.tick >= 20)
            .expect("a hardware fault");
        let err = cfg.indicator_index("error_rate").unwrap();
        let before = trace.metric(f.node, f.tick - 1).values[err];
        let calm = cfg.baseline[err];
        assert!(before > calm + 0.25, "{before} vs {calm}");
    }

    #[test]
    fn load_examples() {
        let w = vec![1.0 / 6.0; 6];
        let zeros = MetricVector::new(0, vec![0.0; 6]).unwrap();
        assert_eq!(system_load(&zeros, &w).unwrap().value(), 0.0);
        let ones = MetricVector::new(0, vec![1.0; 6]).unwrap();
        assert!((system_load(&ones, &w).unwrap().value() - 1.0).abs() < 1e-12);
        let x = MetricVector::new(0, vec![0.2, 0.4, 0.6, 0.1, 0.3, 0.5]).unwrap();
        let mean = x.values.iter().sum::<f64>() / 6.0;
        assert!((system_load(&x, &w).unwrap().value() - mean).abs() < 1e-12);
        assert!(matches!(
            system_load(&x, &[0.5, 0.5]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn labels_mark_horizon_before_fault() {
        let mut trace = generate_trace(&small(0.0), 1).unwrap();
        assert!(label_windows(&trace, 0, 10)
            .unwrap()
            .iter()
            .all(|w| !w.label));
        trace.faults.push(FaultEventSpec {
            tick: 100,
            kind: FaultKind::HardwareFailure,
            node: 1,
            severity: 0.5,
            duration: 0,
        });
        let labels = label_windows(&trace, 1, 10).unwrap();
        let positive: Vec<usize> = (0..labels.len()).filter(|&t| labels[t].label).collect();
        assert_eq!(positive, (90..100).collect::<Vec<_>>());
        assert!(label_windows(&trace, 0, 10)
            .unwrap()
            .iter()
            .all(|w| !w.label));
        assert!(matches!(
            label_windows(&trace, 9, 10),
            Err(Error::UnknownNode(9))
        ));
        assert!(label_windows(&trace, 1, 0).is_err());
    }

    #[test]
    fn trace_text_round_trip() {
        let trace = generate_trace(&small(0.05), 9).unwrap();
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
    }
}
