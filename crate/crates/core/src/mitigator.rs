//! Mitigation scoring, action-conditioned transition estimates, and the
//! standby failover rule.
//!
//! An action's score is `lambda_resource * ResourceCost + lambda_impact *
//! FaultImpact`, where the resource cost is the action's base cost scaled by
//! `1 + load` and the impact is the expected residual downtime for the
//! `(state, action)` pair. Lower is better.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anomaly::DiscreteState;
use crate::error::{Error, Result};
use crate::telemetry::{NodeId, SystemLoad, Tick};

/// Declaration order is the tie-break order used by [`select_action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    NoOp,
    Checkpoint,
    ThrottleLoad,
    MigrateTask,
    RestartNode,
    FailoverToBackup,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::NoOp,
        ActionKind::Checkpoint,
        ActionKind::ThrottleLoad,
        ActionKind::MigrateTask,
        ActionKind::RestartNode,
        ActionKind::FailoverToBackup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::NoOp => "NoOp",
            ActionKind::Checkpoint => "Checkpoint",
            ActionKind::ThrottleLoad => "ThrottleLoad",
            ActionKind::MigrateTask => "MigrateTask",
            ActionKind::RestartNode => "RestartNode",
            ActionKind::FailoverToBackup => "FailoverToBackup",
        }
    }

    pub fn needs_destination(self) -> bool {
        matches!(self, ActionKind::MigrateTask | ActionKind::FailoverToBackup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Action {
    pub kind: ActionKind,
    pub target: NodeId,
    pub destination: Option<NodeId>,
}

impl Action {
    pub fn new(kind: ActionKind, target: NodeId, destination: Option<NodeId>) -> Result<Self> {
        if kind.needs_destination() != destination.is_some() {
            return Err(Error::Input(format!(
                "{} {} a destination",
                kind.as_str(),
                if kind.needs_destination() {
                    "requires"
                } else {
                    "must not have"
                }
            )));
        }
        if destination == Some(target) {
            return Err(Error::Input(format!(
                "{} destination equals target node {target}",
                kind.as_str()
            )));
        }
        Ok(Self {
            kind,
            target,
            destination,
        })
    }

    pub fn simple(kind: ActionKind, target: NodeId) -> Self {
        Self::new(kind, target, None).expect("kind takes no destination")
    }

    pub fn moving(kind: ActionKind, target: NodeId, destination: NodeId) -> Result<Self> {
        Self::new(kind, target, Some(destination))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigatorConfig {
    pub lambda_resource: f64,
    pub lambda_impact: f64,
    /// Failover threshold on the estimated probability of reaching Healthy.
    pub eta: f64,
    /// Laplace smoothing constant of the transition estimate.
    pub prior: f64,
    /// Base resource cost per action kind, in integer cost units.
    pub costs: BTreeMap<ActionKind, u64>,
    /// Expected residual downtime per action kind, indexed by state.
    pub impact: BTreeMap<ActionKind, Vec<f64>>,
}

impl Default for MitigatorConfig {
    fn default() -> Self {
        use ActionKind::*;
        Self {
            lambda_resource: 1.0,
            lambda_impact: 2.0,
            eta: 0.8,
            prior: 1.0,
            costs: BTreeMap::from([
                (NoOp, 0),
                (Checkpoint, 2),
                (ThrottleLoad, 1),
                (MigrateTask, 5),
                (RestartNode, 8),
                (FailoverToBackup, 6),
            ]),
            impact: BTreeMap::from([
                (NoOp, vec![0.0, 4.0, 10.0, 20.0, 30.0]),
                (Checkpoint, vec![0.0, 2.0, 6.0, 12.0, 25.0]),
                (ThrottleLoad, vec![0.0, 3.0, 7.0, 15.0, 30.0]),
                (MigrateTask, vec![1.0, 2.0, 3.0, 4.0, 30.0]),
                (RestartNode, vec![2.0, 4.0, 6.0, 10.0, 15.0]),
                (FailoverToBackup, vec![1.0, 2.0, 3.0, 4.0, 6.0]),
            ]),
        }
    }
}

impl MitigatorConfig {
    pub fn validate(&self, state_count: usize) -> Result<()> {
        for (name, v) in [
            ("mitigator.lambda_resource", self.lambda_resource),
            ("mitigator.lambda_impact", self.lambda_impact),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, "must be >= 0", v));
            }
        }
        if self.lambda_resource + self.lambda_impact <= 0.0 {
            return Err(Error::config(
                "mitigator.lambda_resource+lambda_impact",
                "must be > 0",
                self.lambda_resource + self.lambda_impact,
            ));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::config("mitigator.eta", "must be in (0,1)", self.eta));
        }
        if !(self.prior.is_finite() && self.prior > 0.0) {
            return Err(Error::config("mitigator.prior", "must be > 0", self.prior));
        }
        for (kind, row) in &self.impact {
            if row.len() != state_count {
                return Err(Error::config(
                    format!("mitigator.impact.{}", kind.as_str()),
                    format!("must have one entry per state ({state_count})"),
                    row.len(),
                ));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::config(
                    format!("mitigator.impact.{}", kind.as_str()),
                    "entries must be finite and >= 0",
                    format!("{row:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn cost(&self, kind: ActionKind) -> Result<u64> {
        self.costs.get(&kind).copied().ok_or_else(|| {
            Error::config(
                format!("mitigator.costs.{}", kind.as_str()),
                "missing table entry",
                "none",
            )
        })
    }

    pub fn impact(&self, state: DiscreteState, kind: ActionKind) -> Result<f64> {
        self.impact
            .get(&kind)
            .and_then(|row| row.get(state.index()))
            .copied()
            .ok_or_else(|| {
                Error::config(
                    format!("mitigator.impact.{}[{}]", kind.as_str(), state.index()),
                    "missing table entry",
                    "none",
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreBreakdown {
    pub resource_cost: f64,
    pub fault_impact: f64,
    pub score: f64,
}

pub fn mitigation_score(
    state: DiscreteState,
    action: &Action,
    load: SystemLoad,
    cfg: &MitigatorConfig,
) -> Result<ScoreBreakdown> {
    let resource_cost = cfg.cost(action.kind)? as f64 * (1.0 + load.value());
    let fault_impact = cfg.impact(state, action.kind)?;
    Ok(ScoreBreakdown {
        resource_cost,
        fault_impact,
        score: cfg.lambda_resource * resource_cost + cfg.lambda_impact * fault_impact,
    })
}

fn tie_order(a: &Action, b: &Action) -> Ordering {
    (a.kind, a.destination).cmp(&(b.kind, b.destination))
}

/// Minimal-score candidate, with every candidate's breakdown in input order.
pub fn select_action_scored(
    state: DiscreteState,
    candidates: &[Action],
    load: SystemLoad,
    cfg: &MitigatorConfig,
) -> Result<(Action, Vec<ScoreBreakdown>)> {
    if candidates.is_empty() {
        return Err(Error::Input("empty candidate set".into()));
    }
    let scores = candidates
        .iter()
        .map(|a| mitigation_score(state, a, load, cfg))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..candidates.len())
        .min_by(|&i, &j| {
            scores[i]
                .score
                .total_cmp(&scores[j].score)
                .then_with(|| tie_order(&candidates[i], &candidates[j]))
        })
        .expect("nonempty");
    Ok((candidates[best], scores))
}

pub fn select_action(
    state: DiscreteState,
    candidates: &[Action],
    load: SystemLoad,
    cfg: &MitigatorConfig,
) -> Result<Action> {
    select_action_scored(state, candidates, load, cfg).map(|(a, _)| a)
}

/// Laplace-smoothed counts of observed `(state, action, next state)` outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    pub state_count: usize,
    pub prior: f64,
    counts: BTreeMap<(usize, ActionKind, usize), u64>,
}

impl TransitionModel {
    pub fn new(state_count: usize, prior: f64) -> Self {
        Self {
            state_count,
            prior,
            counts: BTreeMap::new(),
        }
    }

    pub fn with_counts(
        state_count: usize,
        prior: f64,
        counts: impl IntoIterator<Item = ((DiscreteState, ActionKind, DiscreteState), u64)>,
    ) -> Self {
        let mut model = Self::new(state_count, prior);
        for ((s, a, t), c) in counts {
            *model.counts.entry((s.index(), a, t.index())).or_default() += c;
        }
        model
    }

    pub fn observe(&mut self, from: DiscreteState, kind: ActionKind, to: DiscreteState) {
        *self
            .counts
            .entry((from.index(), kind, to.index()))
            .or_default() += 1;
    }

    pub fn count(&self, from: DiscreteState, kind: ActionKind, to: DiscreteState) -> u64 {
        self.counts
            .get(&(from.index(), kind, to.index()))
            .copied()
            .unwrap_or(0)
    }

    fn row_total(&self, from: DiscreteState, kind: ActionKind) -> u64 {
        self.counts
            .range((from.index(), kind, 0)..=(from.index(), kind, usize::MAX))
            .map(|(_, c)| *c)
            .sum()
    }
}

/// `(count(s, a, s') + prior) / (sum_s'' count(s, a, s'') + S * prior)`.
pub fn estimate_transition(
    model: &TransitionModel,
    from: DiscreteState,
    action: &Action,
    to: DiscreteState,
) -> f64 {
    estimate_kind(model, from, action.kind, to)
}

pub fn estimate_kind(
    model: &TransitionModel,
    from: DiscreteState,
    kind: ActionKind,
    to: DiscreteState,
) -> f64 {
    let num = model.count(from, kind, to) as f64 + model.prior;
    let den = model.row_total(from, kind) as f64 + model.state_count as f64 * model.prior;
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BackupResource {
    pub node: NodeId,
    pub warm: bool,
    pub restore_cost: Tick,
}

/// First backup in (warm, cheapest restore, lowest id) order, provided the
/// estimated probability of reaching Healthy after a failover from `state`
/// strictly exceeds `eta`.
pub fn should_failover(
    model: &TransitionModel,
    state: DiscreteState,
    backups: &[BackupResource],
    cfg: &MitigatorConfig,
) -> Option<BackupResource> {
    let success = estimate_kind(
        model,
        state,
        ActionKind::FailoverToBackup,
        DiscreteState::HEALTHY,
    );
    if success <= cfg.eta {
        return None;
    }
    backups
        .iter()
        .min_by_key(|b| (!b.warm, b.restore_cost, b.node))
        .copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CRITICAL: DiscreteState = DiscreteState(3);

    fn load(v: f64) -> SystemLoad {
        SystemLoad::new(v).unwrap()
    }

    fn full_candidates(target: NodeId) -> Vec<Action> {
        vec![
            Action::simple(ActionKind::NoOp, target),
            Action::simple(ActionKind::Checkpoint, target),
            Action::simple(ActionKind::ThrottleLoad, target),
            Action::moving(ActionKind::MigrateTask, target, 5).unwrap(),
            Action::simple(ActionKind::RestartNode, target),
            Action::moving(ActionKind::FailoverToBackup, target, 6).unwrap(),
        ]
    }

    #[test]
    fn action_shape_rules() {
        assert!(Action::new(ActionKind::MigrateTask, 1, None).is_err());
        assert!(Action::new(ActionKind::Checkpoint, 1, Some(2)).is_err());
        assert!(Action::new(ActionKind::FailoverToBackup, 1, Some(1)).is_err());
        assert!(Action::new(ActionKind::FailoverToBackup, 1, Some(2)).is_ok());
    }

    #[test]
    fn default_critical_score_table() {
        // Hand-computed: lambda_resource=1, lambda_impact=2, cost*(1+0.8).
        let expected = [
            (ActionKind::NoOp, 0.0 * 1.8 + 2.0 * 20.0),
            (ActionKind::Checkpoint, 2.0 * 1.8 + 2.0 * 12.0),
            (ActionKind::ThrottleLoad, 1.0 * 1.8 + 2.0 * 15.0),
            (ActionKind::MigrateTask, 5.0 * 1.8 + 2.0 * 4.0),
            (ActionKind::RestartNode, 8.0 * 1.8 + 2.0 * 10.0),
            (ActionKind::FailoverToBackup, 6.0 * 1.8 + 2.0 * 4.0),
        ];
        let cfg = MitigatorConfig::default();
        let cands = full_candidates(0);
        for (action, (kind, want)) in cands.iter().zip(expected) {
            assert_eq!(action.kind, kind);
            let got = mitigation_score(CRITICAL, action, load(0.8), &cfg).unwrap();
            assert!(
                (got.score - want).abs() < 1e-12,
                "{kind:?}: {} vs {want}",
                got.score
            );
        }
        let chosen = select_action(CRITICAL, &cands, load(0.8), &cfg).unwrap();
        assert_eq!(chosen.kind, ActionKind::MigrateTask);
    }

    #[test]
    fn degenerate_weightings() {
        let cands = full_candidates(0);
        let cost_only = MitigatorConfig {
            lambda_impact: 0.0,
            ..MitigatorConfig::default()
        };
        assert_eq!(
            select_action(CRITICAL, &cands, load(0.5), &cost_only)
                .unwrap()
                .kind,
            ActionKind::NoOp
        );
        let impact_only = MitigatorConfig {
            lambda_resource: 0.0,
            ..MitigatorConfig::default()
        };
        // MigrateTask and FailoverToBackup tie at impact 4; the fixed order picks MigrateTask.
        assert_eq!(
            select_action(CRITICAL, &cands, load(0.5), &impact_only)
                .unwrap()
                .kind,
            ActionKind::MigrateTask
        );
    }

    #[test]
    fn ties_and_edge_cases() {
        let cfg = MitigatorConfig::default();
        let single = [Action::simple(ActionKind::RestartNode, 2)];
        assert_eq!(
            select_action(CRITICAL, &single, load(0.1), &cfg).unwrap(),
            single[0]
        );
        assert!(matches!(
            select_action(CRITICAL, &[], load(0.1), &cfg),
            Err(Error::Input(_))
        ));
        let flat = MitigatorConfig {
            costs: ActionKind::ALL.iter().map(|k| (*k, 1)).collect(),
            impact: ActionKind::ALL.iter().map(|k| (*k, vec![1.0; 5])).collect(),
            ..MitigatorConfig::default()
        };
        let pair = [
            Action::moving(ActionKind::MigrateTask, 0, 4).unwrap(),
            Action::moving(ActionKind::MigrateTask, 0, 2).unwrap(),
            Action::simple(ActionKind::RestartNode, 0),
        ];
        let chosen = select_action(CRITICAL, &pair, load(0.3), &flat).unwrap();
        assert_eq!(chosen.destination, Some(2));
        let pair = [
            Action::simple(ActionKind::RestartNode, 0),
            Action::simple(ActionKind::Checkpoint, 0),
        ];
        assert_eq!(
            select_action(CRITICAL, &pair, load(0.3), &flat)
                .unwrap()
                .kind,
            ActionKind::Checkpoint
        );
    }

    #[test]
    fn missing_entry_names_key() {
        let mut cfg = MitigatorConfig::default();
        cfg.costs.remove(&ActionKind::RestartNode);
        let err = mitigation_score(
            CRITICAL,
            &Action::simple(ActionKind::RestartNode, 0),
            load(0.0),
            &cfg,
        )
        .unwrap_err();
        assert!(err.to_string().contains("RestartNode"));
    }

    #[test]
    fn transition_estimates() {
        let model = TransitionModel::new(5, 1.0);
        let a = Action::moving(ActionKind::FailoverToBackup, 0, 1).unwrap();
        for s in 0..5 {
            assert!(
                (estimate_transition(&model, CRITICAL, &a, DiscreteState(s)) - 0.2).abs() < 1e-15
            );
        }
        let model = TransitionModel::with_counts(
            5,
            1.0,
            [(
                (
                    CRITICAL,
                    ActionKind::FailoverToBackup,
                    DiscreteState::HEALTHY,
                ),
                9,
            )],
        );
        let p = estimate_transition(&model, CRITICAL, &a, DiscreteState::HEALTHY);
        assert!((p - 10.0 / 14.0).abs() < 1e-15);

        let mut model = TransitionModel::new(5, 1.0);
        let before = estimate_transition(&model, CRITICAL, &a, DiscreteState(1));
        model.observe(CRITICAL, ActionKind::FailoverToBackup, DiscreteState(1));
        assert!(estimate_transition(&model, CRITICAL, &a, DiscreteState(1)) > before);
    }

    fn backup(node: NodeId, warm: bool, restore_cost: Tick) -> BackupResource {
        BackupResource {
            node,
            warm,
            restore_cost,
        }
    }

    fn model_with_success(successes: u64, failures: u64) -> TransitionModel {
        TransitionModel::with_counts(
            5,
            1.0,
            [
                (
                    (
                        CRITICAL,
                        ActionKind::FailoverToBackup,
                        DiscreteState::HEALTHY,
                    ),
                    successes,
                ),
                (
                    (CRITICAL, ActionKind::FailoverToBackup, DiscreteState(4)),
                    failures,
                ),
            ],
        )
    }

    #[test]
    fn failover_rule() {
        let cfg = MitigatorConfig {
            eta: 0.9,
            ..MitigatorConfig::default()
        };
        let strong = model_with_success(200, 0);
        assert_eq!(should_failover(&strong, CRITICAL, &[], &cfg), None);
        // (200 + 1) / (200 + 5) ~ 0.98 > 0.9.
        let pool = [backup(7, true, 7), backup(3, true, 3), backup(1, false, 0)];
        assert_eq!(
            should_failover(&strong, CRITICAL, &pool, &cfg),
            Some(backup(3, true, 3))
        );
        // (3 + 1) / (3 + 5) = 0.5 exactly.
        let half = model_with_success(3, 0);
        let at_eta = MitigatorConfig {
            eta: 0.5,
            ..MitigatorConfig::default()
        };
        assert_eq!(should_failover(&half, CRITICAL, &pool, &at_eta), None);
        let below = MitigatorConfig {
            eta: 0.49,
            ..MitigatorConfig::default()
        };
        assert!(should_failover(&half, CRITICAL, &pool, &below).is_some());
    }

    fn arb_cfg() -> impl Strategy<Value = (MitigatorConfig, usize)> {
        (
            2usize..=5,
            0.0..5.0f64,
            0.0..5.0f64,
            proptest::collection::vec(0u64..10, 6),
            proptest::collection::vec(0.0..30.0f64, 30),
        )
            .prop_filter("positive weights", |(_, a, b, _, _)| a + b > 0.0)
            .prop_map(|(s, l1, l2, costs, impacts)| {
                let cfg = MitigatorConfig {
                    lambda_resource: l1,
                    lambda_impact: l2,
                    costs: ActionKind::ALL.iter().copied().zip(costs).collect(),
                    impact: ActionKind::ALL
                        .iter()
                        .enumerate()
                        .map(|(i, k)| (*k, impacts[i * 5..i * 5 + s].to_vec()))
                        .collect(),
                    ..MitigatorConfig::default()
                };
                (cfg, s)
            })
    }

    proptest! {
        #[test]
        fn argmin_is_invariant_under_scaling(
            (cfg, s) in arb_cfg(), state in 0usize..5, l in 0.0..=1.0f64, c in 0.01..100.0f64,
        ) {
            let state = DiscreteState(state % s);
            let cands = full_candidates(0);
            let scaled = MitigatorConfig {
                lambda_resource: cfg.lambda_resource * c,
                lambda_impact: cfg.lambda_impact * c,
                ..cfg.clone()
            };
            let a = select_action(state, &cands, load(l), &cfg).unwrap();
            let b = select_action(state, &cands, load(l), &scaled).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn estimate_rows_are_stochastic(
            counts in proptest::collection::vec(0u64..50, 5), prior in 0.1..5.0f64, from in 0usize..5,
        ) {
            let from = DiscreteState(from);
            let model = TransitionModel::with_counts(
                5,
                prior,
                counts.iter().enumerate().map(|(t, c)| ((from, ActionKind::MigrateTask, DiscreteState(t)), *c)),
            );
            let total: f64 = (0..5)
                .map(|t| estimate_kind(&model, from, ActionKind::MigrateTask, DiscreteState(t)))
                .sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn raising_eta_never_enables_failover(
            succ in 0u64..100, fail in 0u64..100, e1 in 0.01..0.99f64, e2 in 0.01..0.99f64,
        ) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let model = model_with_success(succ, fail);
            let pool = [backup(2, true, 1)];
            let at = |eta| should_failover(&model, CRITICAL, &pool, &MitigatorConfig { eta, ..MitigatorConfig::default() });
            if at(lo).is_none() { prop_assert!(at(hi).is_none()); }
        }
    }
}
