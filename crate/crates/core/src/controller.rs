//! Management: the loop state machine, the decision policy and action
//! execution against the registry and the inference agent.

use std::fmt;

use crate::channel::CsiMeasurement;
use crate::kpi::{sgcs, InputDescriptor, KpiSample};
use crate::models::{
    apply_delta, fit_adaptation_delta, predict_csi, train_predictor, ModelIdentity, ModelKey, ModelKind, ModelPackage,
    PredictorConfig,
};
use crate::monitor::AlarmSource;
use crate::registry::Registry;
use crate::{Error, Precoder, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoopState {
    Stable,
    Degraded,
    Recovering,
    Fallback,
}

impl LoopState {
    pub const ALL: [LoopState; 4] = [LoopState::Stable, LoopState::Degraded, LoopState::Recovering, LoopState::Fallback];

    pub fn as_str(self) -> &'static str {
        match self {
            LoopState::Stable => "Stable",
            LoopState::Degraded => "Degraded",
            LoopState::Recovering => "Recovering",
            LoopState::Fallback => "Fallback",
        }
    }
}

impl fmt::Display for LoopState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    Keep,
    Switch { target: ModelKey },
    DeltaUpdate,
    Retrain,
    Rollback { target_version: u32 },
    Fallback,
    ReactivateAi { target: ModelKey },
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::Keep => "Keep",
            ActionKind::Switch { .. } => "Switch",
            ActionKind::DeltaUpdate => "DeltaUpdate",
            ActionKind::Retrain => "Retrain",
            ActionKind::Rollback { .. } => "Rollback",
            ActionKind::Fallback => "Fallback",
            ActionKind::ReactivateAi { .. } => "ReactivateAi",
        }
    }

    /// Actions that hand the functionality to a new or different model.
    pub fn is_model_change(&self) -> bool {
        matches!(
            self,
            ActionKind::Switch { .. } | ActionKind::DeltaUpdate | ActionKind::Retrain | ActionKind::Rollback { .. }
        )
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Switch { target } | ActionKind::ReactivateAi { target } => write!(f, "{}({target})", self.name()),
            ActionKind::Rollback { target_version } => write!(f, "Rollback(v{target_version})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureReason {
    Integrity,
    NotFound,
    Other,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::Integrity => "integrity",
            FailureReason::NotFound => "not_found",
            FailureReason::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    DriftAlarm,
    KpiRecovered,
    ActionIssued,
    ActionFailed,
    ModelActivated,
    FallbackOrdered,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::DriftAlarm,
        EventKind::KpiRecovered,
        EventKind::ActionIssued,
        EventKind::ActionFailed,
        EventKind::ModelActivated,
        EventKind::FallbackOrdered,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlEvent {
    DriftAlarm(AlarmSource),
    KpiRecovered,
    ActionIssued(ActionKind),
    ActionFailed(FailureReason),
    ModelActivated(ModelKey),
    FallbackOrdered,
}

impl ControlEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            ControlEvent::DriftAlarm(_) => EventKind::DriftAlarm,
            ControlEvent::KpiRecovered => EventKind::KpiRecovered,
            ControlEvent::ActionIssued(_) => EventKind::ActionIssued,
            ControlEvent::ActionFailed(_) => EventKind::ActionFailed,
            ControlEvent::ModelActivated(_) => EventKind::ModelActivated,
            ControlEvent::FallbackOrdered => EventKind::FallbackOrdered,
        }
    }
}

/// The loop state transition table. Total: unlisted pairs are self-loops.
pub fn transition(state: LoopState, event: &ControlEvent) -> LoopState {
    use ControlEvent as E;
    use LoopState as S;
    match (state, event) {
        (S::Stable, E::DriftAlarm(_)) => S::Degraded,
        (S::Stable, E::FallbackOrdered) => S::Fallback,
        (S::Degraded, E::ActionIssued(a)) if a.is_model_change() => S::Recovering,
        (S::Degraded, E::ActionIssued(ActionKind::Fallback)) => S::Fallback,
        (S::Recovering, E::KpiRecovered) => S::Stable,
        (S::Recovering, E::DriftAlarm(_)) => S::Degraded,
        (S::Recovering, E::ActionFailed(_)) => S::Degraded,
        (S::Fallback, E::ModelActivated(_)) => S::Recovering,
        (s, _) => s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionPolicy {
    /// Channel-statistics divergence below which an SNR drop explains the
    /// degradation.
    pub delta_low: f64,
    /// Maximum divergence for switching to a stored model.
    pub delta_match: f64,
    /// Maximum divergence for a delta update.
    pub delta_delta: f64,
    pub snr_floor_db: f64,
    /// Window, in evaluations, in which a repeated alarm escalates.
    pub cooldown_evals: u64,
    pub n_recover: u32,
    pub min_train: usize,
    pub delta_rank: usize,
    pub min_delta_pairs: usize,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        DecisionPolicy {
            delta_low: 0.05,
            delta_match: 0.05,
            delta_delta: 0.25,
            snr_floor_db: 5.0,
            cooldown_evals: 3,
            n_recover: 3,
            min_train: 64,
            delta_rank: 2,
            min_delta_pairs: 20,
        }
    }
}

/// Everything [`decide`] looks at. Registry queries are resolved by the
/// caller, so the decision itself is a pure function.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionInputs {
    pub slot: u64,
    pub evaluation_index: u64,
    pub recent_kpis: Vec<KpiSample>,
    pub current_descriptor: Option<InputDescriptor>,
    pub active_descriptor: Option<InputDescriptor>,
    /// Full descriptor divergence between current and active descriptors.
    pub divergence: f64,
    /// The same divergence without the SNR term.
    pub channel_divergence: f64,
    pub mean_snr_db: f64,
    /// `(evaluation_index, action)`, oldest first.
    pub recent_actions: Vec<(u64, ActionKind)>,
    pub active_model: Option<ModelKey>,
    /// Nearest stored model of the same kind with a different model ID.
    pub best_match: Option<(ModelKey, f64)>,
    /// Previous non-retired version of the active model.
    pub previous_version: Option<u32>,
    pub buffered_samples: usize,
    pub delta_pairs: usize,
    pub in_fallback: bool,
}

/// Inputs that triggered an action, kept for the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct Rationale {
    pub rule: &'static str,
    pub divergence: f64,
    pub channel_divergence: f64,
    pub mean_snr_db: f64,
    pub last_sgcs: Option<f64>,
    pub match_divergence: Option<f64>,
    pub buffered_samples: usize,
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:.6}"));
        write!(
            f,
            "rule={} divergence={:.6} channel_divergence={:.6} mean_snr_db={:.3} last_sgcs={} match_divergence={} buffered={}",
            self.rule,
            self.divergence,
            self.channel_divergence,
            self.mean_snr_db,
            opt(self.last_sgcs),
            opt(self.match_divergence),
            self.buffered_samples
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    pub kind: ActionKind,
    pub issued_slot: u64,
    pub rationale: Rationale,
}

/// Priority policy:
///
/// 1. In fallback: reactivate a matching stored model, else retrain once
///    enough data is buffered, else keep waiting.
/// 2. SNR guard: SNR below the floor while the channel statistics still
///    match the active model keeps the model.
/// 3. Escalation: if a Switch or DeltaUpdate was issued within the cooldown
///    window, roll back to the previous version, else retrain, else fall back.
/// 4. Switch to the nearest stored model within `delta_match`.
/// 5. Delta update when the divergence is below `delta_delta`.
/// 6. Fallback.
pub fn decide(inputs: &DecisionInputs, policy: &DecisionPolicy) -> ControlAction {
    let matched = inputs.best_match.as_ref().filter(|(_, d)| *d <= policy.delta_match);
    let can_train = inputs.buffered_samples >= policy.min_train;
    let (rule, kind) = if inputs.in_fallback {
        match (matched, can_train) {
            (Some((k, _)), _) => ("fallback_match", ActionKind::ReactivateAi { target: k.clone() }),
            (None, true) => ("fallback_retrain", ActionKind::Retrain),
            (None, false) => ("fallback_wait", ActionKind::Keep),
        }
    } else if inputs.mean_snr_db < policy.snr_floor_db && inputs.channel_divergence < policy.delta_low {
        ("snr_guard", ActionKind::Keep)
    } else if inputs.recent_actions.iter().rev().any(|(e, a)| {
        inputs.evaluation_index.saturating_sub(*e) <= policy.cooldown_evals
            && matches!(a, ActionKind::Switch { .. } | ActionKind::DeltaUpdate)
    }) {
        match (inputs.previous_version, can_train) {
            (Some(v), _) => ("escalate_rollback", ActionKind::Rollback { target_version: v }),
            (None, true) => ("escalate_retrain", ActionKind::Retrain),
            (None, false) => ("escalate_fallback", ActionKind::Fallback),
        }
    } else if let Some((k, _)) = matched {
        ("descriptor_match", ActionKind::Switch { target: k.clone() })
    } else if inputs.divergence < policy.delta_delta && inputs.delta_pairs >= policy.min_delta_pairs {
        ("small_divergence", ActionKind::DeltaUpdate)
    } else {
        ("no_option", ActionKind::Fallback)
    };
    ControlAction {
        kind,
        issued_slot: inputs.slot,
        rationale: Rationale {
            rule,
            divergence: inputs.divergence,
            channel_divergence: inputs.channel_divergence,
            mean_snr_db: inputs.mean_snr_db,
            last_sgcs: inputs.recent_kpis.last().map(|k| k.value),
            match_divergence: inputs.best_match.as_ref().map(|(_, d)| *d),
            buffered_samples: inputs.buffered_samples,
        },
    }
}

/// What the UE reports in one slot: exactly one of the two paths.
#[derive(Debug, Clone, PartialEq)]
pub enum CsiReport {
    Predicted(Precoder),
    LegacyPmi(usize),
}

/// Runs the active model or routes reporting through the legacy codebook.
#[derive(Debug, Clone, Default)]
pub struct InferenceAgent {
    active: Option<ModelPackage>,
    inference_calls: u64,
}

impl InferenceAgent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn activate(&mut self, model: ModelPackage) {
        self.active = Some(model);
    }

    pub fn deactivate(&mut self) -> Option<ModelPackage> {
        self.active.take()
    }

    pub fn active(&self) -> Option<&ModelPackage> {
        self.active.as_ref()
    }

    pub fn inference_calls(&self) -> u64 {
        self.inference_calls
    }

    /// Predicted CSI from `recent` with the active model, or the legacy PMI
    /// of the newest measurement when no model is active (or there is not yet
    /// enough history for the model).
    pub fn report(&mut self, recent: &[CsiMeasurement], codebook: &[Precoder]) -> Result<CsiReport> {
        let newest = recent.last().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
        if let Some(m) = &self.active {
            let order = crate::models::predictor_config(m)?.order;
            if recent.len() >= order {
                self.inference_calls += 1;
                return predict_csi(m, recent).map(CsiReport::Predicted);
            }
        }
        legacy_csi_report(newest, codebook).map(CsiReport::LegacyPmi)
    }
}

/// Codebook index with the highest SGCS against the measurement; lowest index
/// on ties.
pub fn legacy_csi_report(measurement: &CsiMeasurement, codebook: &[Precoder]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in codebook.iter().enumerate() {
        let v = sgcs(c, &measurement.measured_precoder)?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::invalid("empty codebook"))
}

/// Data the trainer works from when executing DeltaUpdate or Retrain.
#[derive(Debug, Clone, Copy)]
pub struct TrainingContext<'a> {
    pub buffer: &'a [CsiMeasurement],
    pub beam_powers: &'a [Vec<f64>],
    /// `(predicted, ground truth)` monitoring pairs for delta fitting.
    pub delta_pairs: &'a [(Precoder, Precoder)],
    pub predictor: PredictorConfig,
    pub delta_rank: usize,
    /// Model ID and tag used when no model is active.
    pub lineage: (&'a str, &'a str),
    /// Runtime descriptor stamped on a delta-adapted model; derived from
    /// `buffer` when absent.
    pub descriptor: Option<&'a InputDescriptor>,
    pub slot: u64,
}

fn failure(e: &Error) -> ControlEvent {
    ControlEvent::ActionFailed(match e {
        Error::Integrity(_) => FailureReason::Integrity,
        Error::NotFound(_) => FailureReason::NotFound,
        _ => FailureReason::Other,
    })
}

fn next_version(registry: &Registry, model_id: &str) -> u32 {
    registry.list().iter().filter(|e| e.key.model_id == model_id).map(|e| e.key.version).max().unwrap_or(0) + 1
}

fn activate(registry: &mut Registry, agent: &mut InferenceAgent, key: &ModelKey) -> Result<ControlEvent> {
    let pkg = registry.activate(key)?;
    agent.activate(pkg);
    Ok(ControlEvent::ModelActivated(key.clone()))
}

fn store_and_activate(registry: &mut Registry, agent: &mut InferenceAgent, pkg: ModelPackage, slot: u64) -> Result<ControlEvent> {
    let key = registry.store(&pkg, slot)?;
    activate(registry, agent, &key)
}

fn execute_inner(
    action: &ControlAction,
    registry: &mut Registry,
    agent: &mut InferenceAgent,
    ctx: &TrainingContext<'_>,
) -> Result<Option<ControlEvent>> {
    let current = agent.active().map(|m| m.key());
    match &action.kind {
        ActionKind::Keep => Ok(None),
        ActionKind::Switch { target } | ActionKind::ReactivateAi { target } => {
            activate(registry, agent, target).map(Some)
        }
        ActionKind::Rollback { target_version } => {
            let cur = current.ok_or_else(|| Error::NotFound("no active model to roll back".into()))?;
            if *target_version >= cur.version {
                return Err(Error::invalid("rollback target must be older than the active version"));
            }
            let ev = activate(registry, agent, &ModelKey::new(cur.model_id.clone(), *target_version))?;
            registry.retire(&cur)?;
            Ok(Some(ev))
        }
        ActionKind::DeltaUpdate => {
            let base = agent.active().ok_or_else(|| Error::NotFound("no active model to adapt".into()))?;
            let delta = fit_adaptation_delta(base, ctx.delta_pairs, ctx.delta_rank)?;
            let mut adapted = apply_delta(base, &delta)?;
            adapted.descriptor.model_version = next_version(registry, &adapted.descriptor.model_id);
            if let Some(d) = ctx.descriptor {
                adapted.descriptor.input_descriptor = Some(d.clone());
            } else if !ctx.buffer.is_empty() && ctx.beam_powers.len() == ctx.buffer.len() {
                adapted.descriptor.input_descriptor =
                    Some(crate::kpi::derive_input_descriptor(ctx.buffer, ctx.beam_powers)?);
            }
            store_and_activate(registry, agent, adapted, ctx.slot).map(Some)
        }
        ActionKind::Retrain => {
            let (id, tag) = match agent.active() {
                Some(m) => (m.descriptor.model_id.clone(), m.descriptor.functionality_tag.clone()),
                None => (ctx.lineage.0.to_string(), ctx.lineage.1.to_string()),
            };
            let identity = ModelIdentity::new(id.clone(), next_version(registry, &id), tag);
            let model = train_predictor(ctx.buffer, ctx.beam_powers, &ctx.predictor, identity)?;
            store_and_activate(registry, agent, model, ctx.slot).map(Some)
        }
        ActionKind::Fallback => {
            if let Some(m) = agent.deactivate() {
                registry.deactivate(&m.key())?;
            }
            Ok(None)
        }
    }
}

/// Carries out `action`. Returns the follow-up event (`ModelActivated` or
/// `ActionFailed`), or `None` for actions without one (Keep, Fallback).
pub fn execute(
    action: &ControlAction,
    registry: &mut Registry,
    agent: &mut InferenceAgent,
    ctx: &TrainingContext<'_>,
) -> Option<ControlEvent> {
    if let Some(m) = agent.active() {
        if m.kind != ModelKind::CsiPredictor && action.kind.is_model_change() {
            return Some(ControlEvent::ActionFailed(FailureReason::Other));
        }
    }
    match execute_inner(action, registry, agent, ctx) {
        Ok(ev) => ev,
        Err(e) => Some(failure(&e)),
    }
}
