//! Slot-by-slot closed loop: channel, UE reporting, monitoring, controller.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::channel::{dft_codebook, generate_trace, measure_csi, ChannelRegime, CsiMeasurement, RegimeSchedule, TraceConfig};
use crate::controller::{
    decide, execute, transition, ActionKind, ControlAction, ControlEvent, CsiReport, DecisionInputs, InferenceAgent,
    LoopState, Rationale, TrainingContext,
};
use crate::kpi::{derive_input_descriptor, descriptor_divergence, nmse, sgcs, InputDescriptor, KpiKind, KpiSample};
use crate::models::{train_predictor, ModelIdentity, ModelKey, ModelKind};
use crate::monitor::{
    evaluate_type1, evaluate_type2, evaluate_type3, AlarmSource, DriftAlarm, MonitoringMode, MonitoringReport,
    ReportContent, RunLength,
};
use crate::registry::Registry;
use crate::rng::derive_seed;
use crate::{Precoder, Result};

use super::config::ScenarioConfig;
use super::events::{EventLog, EventRecord, RecordKind};
use super::metrics::{metrics_to_csv, MetricsRow};

/// Model ID of the predictor preloaded for `regime`.
pub fn preload_model_id(regime: &str) -> String {
    format!("pred-{regime}")
}

/// Functionality tag shared by all CSI predictors of a given horizon.
pub fn predictor_tag(horizon: usize) -> String {
    format!("CsiPred-H{horizon}")
}

/// First slot at which a monitoring evaluation can compare a prediction
/// against its ground truth.
pub fn warmup_slots(cfg: &ScenarioConfig) -> u64 {
    (cfg.predictor.order - 1 + cfg.predictor.horizon_slots) as u64 + cfg.monitoring.gt_slot_offset
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub num_slots: u64,
    pub evaluations: u64,
    pub alarms: u64,
    pub actions: BTreeMap<String, u64>,
    pub final_state: String,
    pub final_model: Option<String>,
    pub inference_calls: u64,
    pub legacy_reports: u64,
    pub monitor_overhead_bits: u64,
    pub mean_sgcs: f64,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "num_slots = {}", self.num_slots);
        let _ = writeln!(s, "evaluations = {}", self.evaluations);
        let _ = writeln!(s, "alarms = {}", self.alarms);
        for (k, v) in &self.actions {
            let _ = writeln!(s, "actions.{k} = {v}");
        }
        let _ = writeln!(s, "final_state = {}", self.final_state);
        let _ = writeln!(s, "final_model = {}", self.final_model.as_deref().unwrap_or("none"));
        let _ = writeln!(s, "inference_calls = {}", self.inference_calls);
        let _ = writeln!(s, "legacy_reports = {}", self.legacy_reports);
        let _ = writeln!(s, "monitor_overhead_bits = {}", self.monitor_overhead_bits);
        let _ = writeln!(s, "mean_sgcs = {:.6}", self.mean_sgcs);
        s
    }
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub metrics: Vec<MetricsRow>,
    pub events: EventLog,
    pub summary: RunSummary,
    pub registry: Registry,
}

impl ScenarioRun {
    /// Writes `metrics.csv`, `events.log` and `summary.txt` into `dir`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), metrics_to_csv(&self.metrics))?;
        std::fs::write(dir.join("events.log"), self.events.to_text())?;
        std::fs::write(dir.join("summary.txt"), self.summary.to_text())?;
        Ok(())
    }
}

/// Trains the predictor for `regime` on a private trace of the same site.
pub fn train_preload(cfg: &ScenarioConfig, name: &str, regime: &ChannelRegime) -> Result<crate::models::ModelPackage> {
    let n = cfg.channel.antennas;
    let codebook = dft_codebook(n);
    let seed = derive_seed(cfg.seed, &format!("preload.{name}"));
    let tc = TraceConfig::new(RegimeSchedule::constant(regime.clone()), cfg.registry.training_slots as u64, n, codebook, seed)
        .with_site_seed(cfg.channel.site_seed.unwrap_or(cfg.seed));
    let trace = generate_trace(&tc)?;
    let noise = derive_seed(seed, "noise");
    let meas = trace
        .slots
        .iter()
        .map(|s| measure_csi(&s.true_precoder, s.snr_db, noise, s.slot_index))
        .collect::<Result<Vec<_>>>()?;
    let powers: Vec<Vec<f64>> = trace.slots.iter().map(|s| s.per_beam_power.clone()).collect();
    let identity = ModelIdentity::new(preload_model_id(name), 1, predictor_tag(cfg.predictor.horizon_slots));
    train_predictor(&meas, &powers, &cfg.predictor, identity)
}

fn open_registry(cfg: &ScenarioConfig) -> Result<Registry> {
    let mut registry = match &cfg.registry.path {
        Some(p) => Registry::open(p)?,
        None => Registry::in_memory(),
    };
    for name in &cfg.registry.preload {
        let key = ModelKey::new(preload_model_id(name), 1);
        if registry.entry(&key).is_none() {
            let pkg = train_preload(cfg, name, &cfg.channel.regimes[name])?;
            registry.store(&pkg, 0)?;
        }
    }
    Ok(registry)
}

fn last_n<T>(v: &VecDeque<T>, n: usize) -> impl Iterator<Item = &T> {
    v.iter().skip(v.len().saturating_sub(n))
}

struct Loop<'a> {
    cfg: &'a ScenarioConfig,
    codebook: Vec<Precoder>,
    registry: Registry,
    agent: InferenceAgent,
    state: LoopState,
    log: EventLog,
    history: VecDeque<CsiMeasurement>,
    powers: VecDeque<Vec<f64>>,
    pending: BTreeMap<u64, Precoder>,
    delta_pairs: VecDeque<(Precoder, Precoder)>,
    monitor: RunLength,
    recover_count: u32,
    recent_kpis: VecDeque<KpiSample>,
    recent_actions: Vec<(u64, ActionKind)>,
    operator_hold: bool,
    divergence_armed: bool,
    /// Training data starts here after a fallback.
    fresh_since: u64,
    /// Model dropped by a controller-initiated fallback.
    failed: Option<ModelKey>,
    slot: u64,
    summary: RunSummary,
}

impl<'a> Loop<'a> {
    fn emit(&mut self, r: EventRecord) {
        self.log.push(r);
    }

    fn apply(&mut self, slot: u64, event: &ControlEvent) {
        let next = transition(self.state, event);
        if next != self.state {
            let cause = format!("{:?}", event.kind());
            self.emit(
                EventRecord::new(slot, "controller", RecordKind::StateTransition)
                    .with("from", self.state)
                    .with("to", next)
                    .with("cause", cause),
            );
            self.state = next;
        }
    }

    fn active_key(&self) -> Option<ModelKey> {
        self.agent.active().map(|m| m.key())
    }

    fn current_descriptor(&self) -> Result<InputDescriptor> {
        let w = self.cfg.control.descriptor_window;
        let m: Vec<CsiMeasurement> = last_n(&self.history, w).cloned().collect();
        let p: Vec<Vec<f64>> = last_n(&self.powers, w).cloned().collect();
        derive_input_descriptor(&m, &p)
    }

    fn active_divergences(&self, cur: &InputDescriptor) -> (f64, f64) {
        let stored = self.agent.active().and_then(|m| m.descriptor.input_descriptor.clone());
        match stored {
            Some(s) => (
                descriptor_divergence(cur, &s, &self.cfg.weights).unwrap_or(f64::INFINITY),
                descriptor_divergence(cur, &s, &self.cfg.weights.channel_only()).unwrap_or(f64::INFINITY),
            ),
            None => (f64::INFINITY, f64::INFINITY),
        }
    }

    fn decide_now(&self, slot: u64, eval_index: u64, cur: &InputDescriptor, in_fallback: bool) -> Result<ControlAction> {
        let active = self.active_key();
        let (divergence, channel_divergence) = self.active_divergences(cur);
        let exclude = if in_fallback { self.failed.clone() } else { active.clone() };
        let best_match = self.registry.nearest_by_descriptor(cur, ModelKind::CsiPredictor, &self.cfg.weights, |e| {
            exclude.as_ref().is_none_or(|k| *k != e.key)
        })?;
        let inputs = DecisionInputs {
            slot,
            evaluation_index: eval_index,
            recent_kpis: self.recent_kpis.iter().cloned().collect(),
            current_descriptor: Some(cur.clone()),
            active_descriptor: self.agent.active().and_then(|m| m.descriptor.input_descriptor.clone()),
            divergence,
            channel_divergence,
            mean_snr_db: cur.mean_snr_db,
            recent_actions: self.recent_actions.clone(),
            previous_version: active.as_ref().and_then(|k| self.registry.previous_version(&k.model_id, k.version)),
            active_model: active,
            best_match,
            buffered_samples: self.buffered(),
            delta_pairs: self.usable_pairs().len(),
            in_fallback,
        };
        Ok(decide(&inputs, &self.cfg.policy))
    }

    fn buffered(&self) -> usize {
        let fresh = (self.slot + 1).saturating_sub(self.fresh_since) as usize;
        self.history.len().min(self.cfg.control.buffer_len).min(fresh)
    }

    fn usable_pairs(&self) -> Vec<(Precoder, Precoder)> {
        let floor = self.cfg.control.delta_pair_floor;
        self.delta_pairs.iter().filter(|(p, g)| sgcs(p, g).is_ok_and(|v| v >= floor)).cloned().collect()
    }

    fn lineage_id(&self) -> String {
        match self.cfg.registry.preload.first() {
            Some(n) => preload_model_id(n),
            None => "pred-retrained".to_string(),
        }
    }

    /// Logs, executes and acknowledges one action. Returns its name.
    fn carry_out(&mut self, action: ControlAction, eval_index: u64, cur: Option<&InputDescriptor>) -> String {
        let slot = action.issued_slot;
        let kind = action.kind.clone();
        let mut rec = EventRecord::new(slot, "controller", RecordKind::ActionIssued).with("action", kind.name());
        match &kind {
            ActionKind::Switch { target } | ActionKind::ReactivateAi { target } => rec = rec.with("target", target),
            ActionKind::Rollback { target_version } => rec = rec.with("target_version", target_version),
            _ => {}
        }
        let Rationale { rule, divergence, channel_divergence, mean_snr_db, last_sgcs, match_divergence, buffered_samples } =
            action.rationale;
        rec = rec
            .with("rule", rule)
            .with("divergence", format!("{divergence:.6}"))
            .with("channel_divergence", format!("{channel_divergence:.6}"))
            .with("mean_snr_db", format!("{mean_snr_db:.3}"))
            .with("last_sgcs", last_sgcs.map(|v| format!("{v:.6}")).unwrap_or_default())
            .with("match_divergence", match_divergence.map(|v| format!("{v:.6}")).unwrap_or_default())
            .with("buffered", buffered_samples);
        self.emit(rec);
        self.apply(slot, &ControlEvent::ActionIssued(kind.clone()));
        *self.summary.actions.entry(kind.name().to_string()).or_default() += 1;

        let keep = self.buffered();
        let buffer: Vec<CsiMeasurement> = last_n(&self.history, keep).cloned().collect();
        let powers: Vec<Vec<f64>> = last_n(&self.powers, keep).cloned().collect();
        let pairs = self.usable_pairs();
        let lineage_id = self.lineage_id();
        let tag = predictor_tag(self.cfg.predictor.horizon_slots);
        let ctx = TrainingContext {
            buffer: &buffer,
            beam_powers: &powers,
            delta_pairs: &pairs,
            predictor: self.cfg.predictor,
            delta_rank: self.cfg.policy.delta_rank,
            lineage: (&lineage_id, &tag),
            descriptor: cur,
            slot,
        };
        let before = self.active_key();
        let follow_up = execute(&action, &mut self.registry, &mut self.agent, &ctx);
        match &follow_up {
            Some(ControlEvent::ModelActivated(key)) => {
                self.emit(EventRecord::new(slot, "controller", RecordKind::ModelActivated).with("model", key));
                self.pending.clear();
                self.delta_pairs.clear();
            }
            Some(ControlEvent::ActionFailed(reason)) => {
                self.emit(
                    EventRecord::new(slot, "controller", RecordKind::ActionFailed)
                        .with("action", kind.name())
                        .with("reason", format!("{reason:?}")),
                );
            }
            _ => {}
        }
        if let Some(ev) = &follow_up {
            self.apply(slot, ev);
        }
        if kind == ActionKind::Fallback {
            self.pending.clear();
            self.delta_pairs.clear();
            self.fresh_since = (slot + 1).saturating_sub(self.cfg.control.descriptor_window as u64);
            self.failed = if action.rationale.rule == "operator" { None } else { before };
        }
        if kind != ActionKind::Keep {
            self.recent_actions.push((eval_index, kind.clone()));
        }
        self.monitor.reset();
        self.recover_count = 0;
        kind.name().to_string()
    }

    fn evaluate(&mut self, slot: u64, pred: &Precoder, gt: &CsiMeasurement) -> Result<(MonitoringReport, f64, Option<DriftAlarm>)> {
        let m = &self.cfg.monitoring;
        let raw = sgcs(pred, &gt.measured_precoder)?;
        Ok(match m.mode {
            MonitoringMode::Type1 => {
                let (r, a) = evaluate_type1(&mut self.monitor, slot, raw, m)?;
                (r, raw, a)
            }
            MonitoringMode::Type2 => evaluate_type2(&mut self.monitor, slot, pred, &gt.measured_precoder, m)?,
            MonitoringMode::Type3 => evaluate_type3(&mut self.monitor, slot, raw, m)?,
        })
    }
}

/// Runs one scenario end to end. Deterministic in the configuration.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    let n = cfg.channel.antennas;
    let h = cfg.predictor.horizon_slots as u64;
    let offset = cfg.monitoring.gt_slot_offset;
    let codebook = dft_codebook(n);
    let schedule =
        RegimeSchedule::new(cfg.channel.schedule.iter().map(|(s, name)| (*s, cfg.channel.regimes[name].clone())).collect())?;
    let trace_seed = derive_seed(cfg.seed, "run");
    let tc = TraceConfig::new(schedule, cfg.num_slots + h + offset, n, codebook.clone(), trace_seed)
        .with_site_seed(cfg.channel.site_seed.unwrap_or(cfg.seed));
    let trace = generate_trace(&tc)?;
    let noise_seed = derive_seed(trace_seed, "noise");

    let mut registry = open_registry(cfg)?;
    let mut agent = InferenceAgent::new();
    let initial = cfg.registry.active.clone().or_else(|| cfg.registry.preload.first().cloned());
    if let Some(name) = &initial {
        agent.activate(registry.activate(&ModelKey::new(preload_model_id(name), 1))?);
    }
    let state = if agent.active().is_some() { LoopState::Stable } else { LoopState::Fallback };

    let mut lp = Loop {
        cfg,
        codebook,
        registry,
        agent,
        state,
        log: EventLog::default(),
        history: VecDeque::new(),
        powers: VecDeque::new(),
        pending: BTreeMap::new(),
        delta_pairs: VecDeque::new(),
        monitor: RunLength::default(),
        recover_count: 0,
        recent_kpis: VecDeque::new(),
        recent_actions: Vec::new(),
        operator_hold: false,
        divergence_armed: true,
        fresh_since: 0,
        failed: None,
        slot: 0,
        summary: RunSummary { num_slots: cfg.num_slots, ..Default::default() },
    };
    lp.emit(
        EventRecord::new(0, "sim", RecordKind::RunStart)
            .with("seed", cfg.seed)
            .with("num_slots", cfg.num_slots)
            .with("antennas", n)
            .with("mode", cfg.monitoring.mode)
            .with("model", lp.active_key().map(|k| k.to_string()).unwrap_or_default())
            .with("state", lp.state),
    );

    let warmup = warmup_slots(cfg);
    let keep = cfg.control.buffer_len.max(cfg.control.descriptor_window).max(cfg.predictor.order);
    let mut measurements = Vec::with_capacity(cfg.num_slots as usize);
    let mut rows = Vec::with_capacity(cfg.num_slots as usize);
    let mut sgcs_sum = 0.0;

    for t in 0..cfg.num_slots {
        let slot = &trace.slots[t as usize];
        let m = measure_csi(&slot.true_precoder, slot.snr_db, noise_seed, t)?;
        measurements.push(m.clone());
        lp.history.push_back(m.clone());
        lp.powers.push_back(slot.per_beam_power.clone());
        if lp.history.len() > keep {
            lp.history.pop_front();
            lp.powers.pop_front();
        }
        let mut action_name: Option<String> = None;
        let eval_index = cfg.monitoring.eval_period_slots.map_or(0, |p| t / p);
        lp.slot = t;

        if cfg.fallback_slots.contains(&t) && transition(lp.state, &ControlEvent::FallbackOrdered) == LoopState::Fallback {
            lp.emit(EventRecord::new(t, "operator", RecordKind::FallbackOrdered));
            lp.apply(t, &ControlEvent::FallbackOrdered);
            let action = ControlAction {
                kind: ActionKind::Fallback,
                issued_slot: t,
                rationale: Rationale {
                    rule: "operator",
                    divergence: f64::NAN,
                    channel_divergence: f64::NAN,
                    mean_snr_db: m.snr_db.min(crate::kpi::SNR_CAP_DB),
                    last_sgcs: lp.recent_kpis.back().map(|k| k.value),
                    match_divergence: None,
                    buffered_samples: lp.buffered(),
                },
            };
            action_name = Some(lp.carry_out(action, eval_index, None));
            lp.operator_hold = true;
        }
        if cfg.resume_slots.contains(&t) {
            lp.operator_hold = false;
        }

        // UE report for slot t + H.
        let recent: Vec<CsiMeasurement> = last_n(&lp.history, cfg.predictor.order).cloned().collect();
        let applied = match lp.agent.report(&recent, &lp.codebook)? {
            CsiReport::Predicted(p) => {
                lp.pending.insert(t + h, p.clone());
                p
            }
            CsiReport::LegacyPmi(i) => {
                lp.summary.legacy_reports += 1;
                lp.codebook[i].clone()
            }
        };
        let truth = &trace.slots[(t + h) as usize].true_precoder;
        let achieved = sgcs(&applied, truth)?;
        let achieved_nmse = nmse(&applied, truth)?;
        sgcs_sum += achieved;

        // Ground truth for the prediction applied at t - offset arrives now.
        let target = t.checked_sub(offset);
        if let Some(p) = target.and_then(|a| lp.pending.get(&a)) {
            lp.delta_pairs.push_back((p.clone(), m.measured_precoder.clone()));
            if lp.delta_pairs.len() > cfg.control.delta_window {
                lp.delta_pairs.pop_front();
            }
        }

        let mut perf_bad = None;
        let mut divergence_col = None;
        let mut overhead_col = None;
        if cfg.monitoring.is_evaluation_slot(t, warmup) {
            let cur = lp.current_descriptor()?;
            if lp.state == LoopState::Fallback {
                if !lp.operator_hold {
                    let action = lp.decide_now(t, eval_index, &cur, true)?;
                    if action.kind != ActionKind::Keep {
                        action_name = Some(lp.carry_out(action, eval_index, Some(&cur)));
                    }
                }
            } else if let Some(pred) = target.and_then(|a| lp.pending.get(&a)).cloned() {
                let (report, value, mut alarm) = lp.evaluate(t, &pred, &m)?;
                lp.summary.evaluations += 1;
                lp.summary.monitor_overhead_bits += report.overhead_bits;
                overhead_col = Some(report.overhead_bits);
                perf_bad = report.perf_bad();
                let key = lp.active_key();
                let mut rec = EventRecord::new(t, "monitor", RecordKind::MonitoringReport)
                    .with("mode", report.mode())
                    .with("sgcs", format!("{value:.6}"))
                    .with("overhead_bits", report.overhead_bits)
                    .with("model", key.as_ref().map(|k| k.to_string()).unwrap_or_default());
                match &report.content {
                    ReportContent::Type1 { perf_bad } => rec = rec.with("perf_bad", u8::from(*perf_bad)),
                    ReportContent::Type3 { quantized_sgcs_code } => rec = rec.with("code", quantized_sgcs_code),
                    ReportContent::Type2 { .. } => {}
                }
                lp.emit(rec);
                lp.recent_kpis.push_back(KpiSample {
                    slot_index: t,
                    kind: KpiKind::Sgcs,
                    value,
                    model_id: key.as_ref().map(|k| k.model_id.clone()).unwrap_or_default(),
                    model_version: key.as_ref().map_or(0, |k| k.version),
                });
                if lp.recent_kpis.len() > 8 {
                    lp.recent_kpis.pop_front();
                }

                let (div, _) = lp.active_divergences(&cur);
                divergence_col = div.is_finite().then_some(div);
                if let Some(thr) = cfg.control.divergence_alarm {
                    if div <= thr {
                        lp.divergence_armed = true;
                    } else if lp.divergence_armed && alarm.is_none() {
                        lp.divergence_armed = false;
                        alarm = Some(DriftAlarm { slot_index: t, source: AlarmSource::DescriptorDivergence, value: div });
                    }
                }

                if let Some(a) = alarm {
                    lp.summary.alarms += 1;
                    lp.emit(
                        EventRecord::new(t, "monitor", RecordKind::DriftAlarm)
                            .with("source", a.source)
                            .with("value", format!("{:.6}", a.value)),
                    );
                    lp.apply(t, &ControlEvent::DriftAlarm(a.source));
                    let action = lp.decide_now(t, eval_index, &cur, false)?;
                    action_name = Some(lp.carry_out(action, eval_index, Some(&cur)));
                } else if lp.state == LoopState::Recovering {
                    if value >= cfg.monitoring.threshold_gamma {
                        lp.recover_count += 1;
                        if lp.recover_count >= cfg.policy.n_recover {
                            lp.emit(
                                EventRecord::new(t, "controller", RecordKind::KpiRecovered)
                                    .with("evaluations", lp.recover_count),
                            );
                            lp.apply(t, &ControlEvent::KpiRecovered);
                            lp.recover_count = 0;
                        }
                    } else {
                        lp.recover_count = 0;
                    }
                }
            }
        }
        if let Some(limit) = t.checked_sub(offset) {
            lp.pending = lp.pending.split_off(&limit);
        }

        let key = lp.active_key();
        rows.push(MetricsRow {
            slot: t,
            sgcs: achieved,
            nmse: achieved_nmse,
            loop_state: lp.state.to_string(),
            active_model_id: key.as_ref().map(|k| k.model_id.clone()),
            active_model_version: key.as_ref().map(|k| k.version),
            perf_bad,
            action: action_name,
            descriptor_divergence: divergence_col,
            monitor_overhead_bits: overhead_col,
        });
    }

    let last = cfg.num_slots - 1;
    lp.summary.final_state = lp.state.to_string();
    lp.summary.final_model = lp.active_key().map(|k| k.to_string());
    lp.summary.inference_calls = lp.agent.inference_calls();
    lp.summary.mean_sgcs = sgcs_sum / cfg.num_slots as f64;
    let end = EventRecord::new(last, "sim", RecordKind::RunEnd)
        .with("state", lp.state)
        .with("model", lp.summary.final_model.clone().unwrap_or_default())
        .with("inference_calls", lp.summary.inference_calls)
        .with("evaluations", lp.summary.evaluations);
    lp.emit(end);

    Ok(ScenarioRun { metrics: rows, events: lp.log, summary: lp.summary, registry: lp.registry })
}
