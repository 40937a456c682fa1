mod common;

use common::*;
use ftsim_core::config::ScenarioConfig;
use ftsim_core::events::{write_events, EventPayload, SimEvent};
use ftsim_core::metrics::compute_metrics;
use ftsim_core::mitigator::{Action, ActionKind};
use ftsim_core::sim::{run_on_trace, run_simulation, simulate};
use ftsim_core::strategies::{
    NodeStatus, Observation, PlannedAction, Replication, Strategy as SimStrategy, StrategyKind,
    StrategyOutput,
};
use ftsim_core::telemetry::{generate_trace, FaultKind, Tick};
use ftsim_core::Result;
use proptest::prelude::*;

const CP20: StrategyKind = StrategyKind::Cp { interval: 20 };

/// Checkpoints node 0 at the listed ticks and does nothing else.
struct Scripted(Vec<Tick>);

impl SimStrategy for Scripted {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput> {
        let mut out = StrategyOutput::default();
        if self.0.contains(&obs.tick) {
            out.decisions.push(PlannedAction {
                action: Action::simple(ActionKind::Checkpoint, 0),
                detail: None,
            });
        }
        Ok(out)
    }
}

fn single_fault_recovery(warm_backups: usize, seed: u64) -> Tick {
    let mut cfg = ScenarioConfig::default();
    cfg.cluster.warm_backups = warm_backups;
    let mut trace = generate_trace(&cfg.telemetry, seed).unwrap();
    let tick = 200 + (seed * 7919) % 5000;
    let node = seed as usize % cfg.cluster.tasks;
    trace.faults = vec![hardware(tick, node)];
    let report = run_on_trace(&cfg, &CP20, &trace, None).unwrap();
    assert_eq!(report.metrics.recovery_times.len(), 1);
    report.metrics.recovery_times[0]
}

#[test]
fn single_fault_cp_recovers_within_interval_plus_restore() {
    for seed in 1..=10 {
        for warm in [0, 2] {
            let r = single_fault_recovery(warm, seed);
            assert!(r <= 23, "seed {seed} warm {warm}: recovery {r}");
        }
    }
}

#[test]
fn single_fault_cp_bound_holds_at_every_phase() {
    let cfg = {
        let mut c = small_config(8, 200);
        c.cluster.warm_backups = 0;
        c
    };
    for tick in 40..80 {
        let trace = flat_trace(8, 200, vec![hardware(tick, 0)]);
        let m = run_on_trace(&cfg, &CP20, &trace, None).unwrap().metrics;
        assert!(
            m.recovery_times[0] <= 23,
            "fault at {tick}: {:?}",
            m.recovery_times
        );
    }
}

fn checkpoint_span(events: &[SimEvent]) -> Tick {
    let start = events
        .iter()
        .find(|e| matches!(e.payload, EventPayload::CheckpointStart { task: 0, .. }))
        .unwrap()
        .tick;
    let done = events
        .iter()
        .find(|e| matches!(e.payload, EventPayload::CheckpointDone { task: 0, .. }))
        .unwrap()
        .tick;
    done - start + 1
}

#[test]
fn network_fault_doubles_inflight_checkpoint() {
    let cfg = small_config(8, 60);
    let calm = flat_trace(8, 60, vec![]);
    let noisy = flat_trace(
        8,
        60,
        vec![transient(20, 0, FaultKind::NetworkInstability, 0.5, 30)],
    );
    let run = |trace| simulate(&cfg, trace, &mut Scripted(vec![20]), 0).unwrap();
    let base = checkpoint_span(&run(&calm));
    let slow = checkpoint_span(&run(&noisy));
    assert_eq!(base, cfg.cluster.save_ticks);
    assert_eq!(slow, 2 * base);
}

#[test]
fn cp_ten_over_hundred_ticks_checkpoints_each_task_ten_times() {
    let cfg = small_config(8, 100);
    let trace = flat_trace(8, 100, vec![]);
    let events = run_on_trace(&cfg, &StrategyKind::Cp { interval: 10 }, &trace, None)
        .unwrap()
        .events;
    for task in 0..cfg.cluster.tasks {
        let n = count(
            &events,
            |p| matches!(p, EventPayload::CheckpointStart { task: t, .. } if *t == task),
        );
        assert_eq!(n, 10, "task {task}");
    }
}

#[test]
fn no_faults_means_no_downtime() {
    let mut cfg = ScenarioConfig::default();
    cfg.telemetry.fault_rate = 0.0;
    cfg.telemetry.ticks = 2000;
    for kind in [CP20, StrategyKind::Rp { replicas: 2 }] {
        let m = run_simulation(&cfg, &kind, 3, None).unwrap().metrics;
        assert!(m.recovery_times.is_empty());
        assert_eq!(m.total_downtime, 0);
    }
}

#[test]
fn hardware_fault_on_empty_node_still_logs_start_and_end() {
    let cfg = small_config(8, 100);
    let trace = flat_trace(8, 100, vec![hardware(10, 7)]);
    let events = run_on_trace(&cfg, &CP20, &trace, None).unwrap().events;
    assert!(events.iter().any(|e| e.tick == 10
        && matches!(&e.payload, EventPayload::FaultStart { node: 7, affected, .. } if affected.is_empty())));
    let end = events
        .iter()
        .find(|e| matches!(e.payload, EventPayload::FaultEnd { node: 7, .. }))
        .unwrap();
    assert_eq!(end.tick, 10 + cfg.cluster.repair_ticks);
}

#[test]
fn runs_are_deterministic_and_replay_from_the_log() {
    let mut cfg = ScenarioConfig::default();
    cfg.telemetry.ticks = 3000;
    let kind = StrategyKind::Rp { replicas: 2 };
    let a = run_simulation(&cfg, &kind, 5, None).unwrap();
    let b = run_simulation(&cfg, &kind, 5, None).unwrap();
    assert_eq!(a, b);

    let mut bytes = Vec::new();
    write_events(&a.events, &mut bytes).unwrap();
    let replayed: Vec<SimEvent> = String::from_utf8(bytes)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replayed, a.events);
    let trace = generate_trace(&cfg.telemetry, 5).unwrap();
    let m = compute_metrics(&replayed, &trace, cfg.predictor.horizon).unwrap();
    assert_eq!(m, a.metrics);
}

#[test]
fn trace_size_mismatch_is_rejected() {
    let cfg = ScenarioConfig::default();
    let trace = flat_trace(3, 10, vec![]);
    assert!(run_on_trace(&cfg, &CP20, &trace, None).is_err());
}

#[test]
fn adding_a_checkpoint_never_lowers_overhead() {
    let cfg = small_config(8, 120);
    let trace = flat_trace(8, 120, vec![hardware(70, 0)]);
    let overhead = |ticks: Vec<Tick>| {
        let events = simulate(&cfg, &trace, &mut Scripted(ticks), 0).unwrap();
        compute_metrics(&events, &trace, 10).unwrap().overhead_cost
    };
    let mut ticks = Vec::new();
    let mut last = overhead(ticks.clone());
    for t in [5, 17, 30, 44, 60, 90] {
        ticks.push(t);
        let next = overhead(ticks.clone());
        assert!(next >= last, "{ticks:?}: {next} < {last}");
        last = next;
    }
}

fn fault_strategy() -> impl Strategy<Value = Vec<ftsim_core::telemetry::FaultEventSpec>> {
    let kinds = prop_oneof![
        Just(FaultKind::HardwareFailure),
        Just(FaultKind::NetworkInstability),
        Just(FaultKind::ResourceOverload),
    ];
    prop::collection::vec((0u64..300, 0usize..8, kinds, 0.3f64..1.0, 1u64..40), 0..12).prop_map(
        |v| {
            v.into_iter()
                .map(|(tick, node, kind, sev, dur)| {
                    if kind.is_transient() {
                        transient(tick, node, kind, sev, dur)
                    } else {
                        hardware(tick, node)
                    }
                })
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn log_is_well_formed_and_every_fault_is_accounted_for(
        faults in fault_strategy(),
        which in 0usize..3,
    ) {
        let cfg = small_config(8, 300);
        let trace = flat_trace(8, 300, faults);
        let kind = [CP20, StrategyKind::Rp { replicas: 2 }, StrategyKind::Sm { threshold: 2 }][which].clone();
        let report = run_on_trace(&cfg, &kind, &trace, None).unwrap();
        let events = &report.events;

        for (i, pair) in events.windows(2).enumerate() {
            prop_assert_eq!(pair[1].seq, pair[0].seq + 1, "seq gap at {}", i);
            prop_assert!(pair[1].tick >= pair[0].tick);
        }
        let mut ticks = 0;
        for e in events {
            if let EventPayload::MetricTick { unavailable, .. } = e.payload {
                prop_assert!(unavailable <= cfg.cluster.tasks);
                ticks += 1;
            }
        }
        prop_assert_eq!(ticks, 300);

        let affected = count(events, |p| matches!(p, EventPayload::FaultStart { affected, .. } if !affected.is_empty()));
        let done = count(events, |p| matches!(p, EventPayload::RecoveryDone { .. }));
        let m = &report.metrics;
        prop_assert_eq!(m.recovery_times.len(), affected);
        prop_assert_eq!(done + m.censored, affected);
        prop_assert!(m.total_downtime <= 300);
        prop_assert_eq!(m.confusion.total(), 8 * 300);
        prop_assert_eq!(m.total_downtime == 0, m.recovery_times.is_empty());
    }

    #[test]
    fn replica_count_stays_at_k_while_enough_nodes_are_up(faults in fault_strategy()) {
        let cfg = small_config(8, 300);
        let trace = flat_trace(8, 300, faults);
        let mut spy = Spy { inner: Replication, seen: Vec::new() };
        simulate(&cfg, &trace, &mut spy, 2).unwrap();
        for (tick, up, counts) in spy.seen {
            for c in counts {
                prop_assert!(c <= 2, "tick {}: {} replicas", tick, c);
                if up >= 3 {
                    prop_assert!(c == 2, "tick {}: {} replicas with {} nodes up", tick, c, up);
                }
            }
        }
    }
}

/// Records replica counts and Up nodes seen by the wrapped strategy.
struct Spy<S> {
    inner: S,
    seen: Vec<(Tick, usize, Vec<usize>)>,
}

impl<S: SimStrategy> SimStrategy for Spy<S> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput> {
        let up = obs
            .nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Up)
            .count();
        self.seen.push((
            obs.tick,
            up,
            obs.tasks.iter().map(|t| t.replicas.len()).collect(),
        ));
        self.inner.decide(obs)
    }
}

#[test]
fn hardware_fault_rolls_back_to_the_snapshot() {
    let cfg = small_config(8, 100);
    let trace = flat_trace(8, 100, vec![hardware(50, 0)]);
    let events = simulate(&cfg, &trace, &mut Scripted(vec![30]), 0).unwrap();
    let lost = events
        .iter()
        .find_map(|e| match e.payload {
            EventPayload::RecoveryStart {
                task: 0, lost_work, ..
            } => Some(lost_work),
            _ => None,
        })
        .unwrap();
    // Progress pauses while the save is in flight.
    assert_eq!(lost, 50 - 30 - cfg.cluster.save_ticks);
}

#[test]
fn fault_on_down_node_is_a_logged_noop() {
    let cfg = small_config(8, 100);
    let trace = flat_trace(8, 100, vec![hardware(10, 1), hardware(20, 1)]);
    let events = run_on_trace(&cfg, &CP20, &trace, None).unwrap().events;
    assert!(events.iter().any(|e| e.tick == 20
        && matches!(&e.payload, EventPayload::FaultStart { fault: 1, affected, .. } if affected.is_empty())));
    assert!(events.iter().any(|e| e.tick == 20
        && matches!(
            e.payload,
            EventPayload::FaultEnd {
                fault: 1,
                noop: true,
                ..
            }
        )));
}
