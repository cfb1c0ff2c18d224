//! Browser demo: three interactive views over the simulator.
//!
//! - [`drift_run`]: closed-loop run of an editable scenario, downsampled SGCS
//!   trace plus the control events.
//! - [`autoencoder_point`]: one latent size / bit width of a two-sided CSI
//!   compression model on a synthetic channel.
//! - [`monitoring_sweep`]: overhead and KPI as the monitoring period varies.
//!
//! The `wasm_bindgen` exports return JSON strings of the same structs.

use lcm_core::channel::ChannelRegime;
use lcm_core::intervendor::{mean_reconstruction_sgcs, ReferenceSetup};
use lcm_core::models::{train_autoencoder_joint, AutoencoderConfig};
use lcm_core::sim::{run_scenario, windowed_mean_sgcs, RawConfig, RecordKind, ScenarioConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const DEFAULT_SCENARIO: &str = include_str!("../../../scenarios/drift_switch.conf");

#[derive(Debug, Serialize)]
pub struct TracePoint {
    pub slot: u64,
    pub sgcs: f64,
}

#[derive(Debug, Serialize)]
pub struct DemoEvent {
    pub slot: u64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct DriftRun {
    pub num_slots: u64,
    pub bucket: u64,
    pub trace: Vec<TracePoint>,
    pub events: Vec<DemoEvent>,
    pub summary: String,
    pub final_state: String,
}

/// Runs `config` and averages SGCS over buckets of `bucket` slots.
pub fn drift_run(config: &str, bucket: u64) -> lcm_core::Result<DriftRun> {
    let cfg = ScenarioConfig::parse(config)?;
    let run = run_scenario(&cfg)?;
    let bucket = bucket.max(1);
    let trace = (0..cfg.num_slots)
        .step_by(bucket as usize)
        .filter_map(|s| windowed_mean_sgcs(&run.metrics, s, s + bucket).map(|v| TracePoint { slot: s, sgcs: v }))
        .collect();
    let shown = [
        RecordKind::DriftAlarm,
        RecordKind::ActionIssued,
        RecordKind::ActionFailed,
        RecordKind::ModelActivated,
        RecordKind::FallbackOrdered,
        RecordKind::StateTransition,
    ];
    let events = run
        .events
        .records
        .iter()
        .filter(|r| shown.contains(&r.kind))
        .map(|r| DemoEvent {
            slot: r.slot,
            kind: r.kind.as_str().to_string(),
            detail: r.fields.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "),
        })
        .collect();
    Ok(DriftRun {
        num_slots: cfg.num_slots,
        bucket,
        trace,
        events,
        summary: run.summary.to_text(),
        final_state: run.summary.final_state.clone(),
    })
}

#[derive(Debug, Serialize)]
pub struct AutoencoderPoint {
    pub latent_dim: usize,
    pub bits_per_dim: u32,
    pub feedback_bits: usize,
    pub train_sgcs: f64,
    pub eval_sgcs: f64,
    pub decoder_flops: u64,
    pub decoder_storage_bytes: u64,
}

pub fn autoencoder_point(
    antennas: usize,
    paths: usize,
    doppler: f64,
    latent_dim: usize,
    bits_per_dim: u32,
    seed: u64,
) -> lcm_core::Result<AutoencoderPoint> {
    let setup = ReferenceSetup::new(antennas, ChannelRegime::new("demo", paths, doppler), 1024, 256);
    let (train, eval) = setup.targets(1.0, seed)?;
    let cfg = AutoencoderConfig { latent_dim, bits_per_dim, input_dim: antennas };
    let (enc, dec) = train_autoencoder_joint(&train, &cfg, "demo")?;
    let feedback_bits = if bits_per_dim == 0 { 0 } else { 2 * latent_dim * bits_per_dim as usize };
    Ok(AutoencoderPoint {
        latent_dim,
        bits_per_dim,
        feedback_bits,
        train_sgcs: mean_reconstruction_sgcs(&enc, &dec, &train)?,
        eval_sgcs: mean_reconstruction_sgcs(&enc, &dec, &eval)?,
        decoder_flops: dec.descriptor.flops_per_inference,
        decoder_storage_bytes: dec.descriptor.storage_bytes,
    })
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub period: u64,
    pub evaluations: u64,
    pub overhead_bits: u64,
    pub alarms: u64,
    pub first_alarm: Option<u64>,
    pub mean_sgcs: f64,
}

/// One run per evaluation period.
pub fn monitoring_sweep(config: &str, periods: &[u64]) -> lcm_core::Result<Vec<SweepRow>> {
    let base = RawConfig::parse(config)?;
    periods
        .iter()
        .map(|&p| {
            let mut raw = base.clone();
            raw.set("monitoring.period", &p.to_string());
            let cfg = ScenarioConfig::from_raw(&raw)?;
            let run = run_scenario(&cfg)?;
            let first_alarm = run.events.of_kind(RecordKind::DriftAlarm).map(|r| r.slot).next();
            Ok(SweepRow {
                period: p,
                evaluations: run.summary.evaluations,
                overhead_bits: run.summary.monitor_overhead_bits,
                alarms: run.summary.alarms,
                first_alarm,
                mean_sgcs: run.summary.mean_sgcs,
            })
        })
        .collect()
}

fn js<T: Serialize>(r: lcm_core::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = defaultScenario)]
pub fn default_scenario() -> String {
    DEFAULT_SCENARIO.to_string()
}

#[wasm_bindgen(js_name = runDrift)]
pub fn run_drift_js(config: &str, bucket: u32) -> Result<String, JsError> {
    js(drift_run(config, bucket as u64))
}

#[wasm_bindgen(js_name = autoencoderPoint)]
pub fn autoencoder_point_js(
    antennas: u32,
    paths: u32,
    doppler: f64,
    latent_dim: u32,
    bits_per_dim: u32,
    seed: u32,
) -> Result<String, JsError> {
    js(autoencoder_point(antennas as usize, paths as usize, doppler, latent_dim as usize, bits_per_dim, seed as u64))
}

/// `periods` is comma separated.
#[wasm_bindgen(js_name = monitoringSweep)]
pub fn monitoring_sweep_js(config: &str, periods: &str) -> Result<String, JsError> {
    let parsed: Result<Vec<u64>, _> = periods.split(',').map(|s| s.trim().parse::<u64>()).collect();
    let parsed = parsed.map_err(|e| JsError::new(&format!("periods: {e}")))?;
    js(monitoring_sweep(config, &parsed))
}
