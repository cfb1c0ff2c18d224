//! UE-assisted performance monitoring.
//!
//! Three reporting modes trade air-interface overhead against gNB-side
//! visibility:
//!
//! - Type 1: the UE computes SGCS and reports a 1-bit `perf_bad` flag.
//! - Type 2: the UE reports both the predicted and the ground-truth precoder;
//!   the gNB computes SGCS.
//! - Type 3: the UE reports a `B`-bit quantised SGCS value.
//!
//! In every mode the same run-length rule drives alarms: a counter counts
//! consecutive evaluations below the threshold, the flag is raised while the
//! counter is at least `N`, and a [`DriftAlarm`] fires only on the step from
//! `N - 1` to `N`.

use std::fmt;
use std::str::FromStr;

use crate::kpi::sgcs;
use crate::{Error, Precoder, Result};

/// Bits per real component when reporting raw precoders (Type 2).
pub const RAW_BITS_PER_REAL: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MonitoringMode {
    Type1,
    Type2,
    Type3,
}

impl fmt::Display for MonitoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonitoringMode::Type1 => "type1",
            MonitoringMode::Type2 => "type2",
            MonitoringMode::Type3 => "type3",
        })
    }
}

impl FromStr for MonitoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type1" | "1" => Ok(MonitoringMode::Type1),
            "type2" | "2" => Ok(MonitoringMode::Type2),
            "type3" | "3" => Ok(MonitoringMode::Type3),
            other => Err(Error::invalid(format!("unknown monitoring mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitoringConfig {
    pub mode: MonitoringMode,
    pub threshold_gamma: f64,
    pub n_consec: u32,
    pub quant_bits: u32,
    pub gt_slot_offset: u64,
    /// `None` disables monitoring.
    pub eval_period_slots: Option<u64>,
}

impl Default for MonitoringConfig {
    fn default() -> Self {
        MonitoringConfig {
            mode: MonitoringMode::Type1,
            threshold_gamma: 0.8,
            n_consec: 3,
            quant_bits: 8,
            gt_slot_offset: 0,
            eval_period_slots: Some(20),
        }
    }
}

impl MonitoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_gamma > 0.0 && self.threshold_gamma < 1.0) {
            return Err(Error::invalid(format!("threshold {} outside (0, 1)", self.threshold_gamma)));
        }
        if self.n_consec == 0 {
            return Err(Error::invalid("n_consec must be at least 1"));
        }
        if !(1..=16).contains(&self.quant_bits) {
            return Err(Error::invalid(format!("quant_bits {} outside 1..=16", self.quant_bits)));
        }
        if self.eval_period_slots == Some(0) {
            return Err(Error::invalid("eval_period_slots must be positive"));
        }
        Ok(())
    }

    pub fn is_evaluation_slot(&self, slot: u64, warmup: u64) -> bool {
        match self.eval_period_slots {
            Some(p) => slot >= warmup && slot % p == 0,
            None => false,
        }
    }
}

/// Mode-specific report payload.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportContent {
    Type1 { perf_bad: bool },
    Type2 { predicted: Precoder, ground_truth: Precoder },
    Type3 { quantized_sgcs_code: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringReport {
    pub slot_index: u64,
    pub content: ReportContent,
    pub overhead_bits: u64,
}

impl MonitoringReport {
    pub fn mode(&self) -> MonitoringMode {
        match self.content {
            ReportContent::Type1 { .. } => MonitoringMode::Type1,
            ReportContent::Type2 { .. } => MonitoringMode::Type2,
            ReportContent::Type3 { .. } => MonitoringMode::Type3,
        }
    }

    pub fn perf_bad(&self) -> Option<bool> {
        match self.content {
            ReportContent::Type1 { perf_bad } => Some(perf_bad),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmSource {
    KpiThreshold,
    DescriptorDivergence,
}

impl fmt::Display for AlarmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlarmSource::KpiThreshold => "kpi_threshold",
            AlarmSource::DescriptorDivergence => "descriptor_divergence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftAlarm {
    pub slot_index: u64,
    pub source: AlarmSource,
    pub value: f64,
}

/// Run-length state of one monitoring session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunLength {
    pub counter: u32,
}

impl RunLength {
    /// Feeds one value; returns `(flag, rising_edge)`.
    pub fn observe(&mut self, value: f64, gamma: f64, n: u32) -> (bool, bool) {
        if value < gamma {
            self.counter = self.counter.saturating_add(1);
        } else {
            self.counter = 0;
        }
        (self.counter >= n, self.counter == n)
    }

    /// Controller acknowledgement.
    pub fn reset(&mut self) {
        self.counter = 0;
    }
}

pub fn schedule_ground_truth(prediction_slot: u64, cfg: &MonitoringConfig) -> u64 {
    prediction_slot + cfg.gt_slot_offset
}

fn alarm(slot: u64, edge: bool, value: f64) -> Option<DriftAlarm> {
    edge.then_some(DriftAlarm { slot_index: slot, source: AlarmSource::KpiThreshold, value })
}

fn check_unit(value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(format!("SGCS value {value} outside [0, 1]")));
    }
    Ok(())
}

pub fn evaluate_type1(
    state: &mut RunLength,
    slot: u64,
    sgcs_value: f64,
    cfg: &MonitoringConfig,
) -> Result<(MonitoringReport, Option<DriftAlarm>)> {
    check_unit(sgcs_value)?;
    let (flag, edge) = state.observe(sgcs_value, cfg.threshold_gamma, cfg.n_consec);
    let report = MonitoringReport { slot_index: slot, content: ReportContent::Type1 { perf_bad: flag }, overhead_bits: 1 };
    Ok((report, alarm(slot, edge, sgcs_value)))
}

pub fn type2_overhead_bits(num_tx_antennas: usize) -> u64 {
    2 * 2 * num_tx_antennas as u64 * RAW_BITS_PER_REAL
}

/// Returns the report, the gNB-side SGCS and an optional alarm.
pub fn evaluate_type2(
    state: &mut RunLength,
    slot: u64,
    predicted: &Precoder,
    ground_truth: &Precoder,
    cfg: &MonitoringConfig,
) -> Result<(MonitoringReport, f64, Option<DriftAlarm>)> {
    let value = sgcs(predicted, ground_truth)?;
    let (_, edge) = state.observe(value, cfg.threshold_gamma, cfg.n_consec);
    let report = MonitoringReport {
        slot_index: slot,
        content: ReportContent::Type2 { predicted: predicted.clone(), ground_truth: ground_truth.clone() },
        overhead_bits: type2_overhead_bits(predicted.len()),
    };
    Ok((report, value, alarm(slot, edge, value)))
}

pub fn quantize_sgcs(value: f64, bits: u32) -> u32 {
    let levels = ((1u64 << bits) - 1) as f64;
    (value * levels).round() as u32
}

pub fn dequantize_sgcs(code: u32, bits: u32) -> f64 {
    code as f64 / ((1u64 << bits) - 1) as f64
}

/// Returns the report, the gNB-side dequantised value and an optional alarm.
pub fn evaluate_type3(
    state: &mut RunLength,
    slot: u64,
    sgcs_value: f64,
    cfg: &MonitoringConfig,
) -> Result<(MonitoringReport, f64, Option<DriftAlarm>)> {
    check_unit(sgcs_value)?;
    let code = quantize_sgcs(sgcs_value, cfg.quant_bits);
    let value = dequantize_sgcs(code, cfg.quant_bits);
    let (_, edge) = state.observe(value, cfg.threshold_gamma, cfg.n_consec);
    let report = MonitoringReport {
        slot_index: slot,
        content: ReportContent::Type3 { quantized_sgcs_code: code },
        overhead_bits: cfg.quant_bits as u64,
    };
    Ok((report, value, alarm(slot, edge, value)))
}

pub fn report_overhead_bits(cfg: &MonitoringConfig, num_tx_antennas: usize) -> u64 {
    match cfg.mode {
        MonitoringMode::Type1 => 1,
        MonitoringMode::Type2 => type2_overhead_bits(num_tx_antennas),
        MonitoringMode::Type3 => cfg.quant_bits as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadSummary {
    pub evaluations: u64,
    pub total_bits: u64,
    /// Fraction of slots carrying a monitoring report.
    pub slot_fraction: f64,
}

/// Monitoring load of a run of `num_slots` slots in which evaluations start
/// at slot `warmup`.
pub fn monitoring_overhead(num_slots: u64, num_tx_antennas: usize, warmup: u64, cfg: &MonitoringConfig) -> OverheadSummary {
    let evaluations = match cfg.eval_period_slots {
        None => 0,
        Some(_) if warmup >= num_slots => 0,
        Some(p) => {
            // Multiples of p in [warmup, num_slots).
            let first = warmup.div_ceil(p);
            let last = (num_slots - 1) / p;
            (last + 1).saturating_sub(first)
        }
    };
    OverheadSummary {
        evaluations,
        total_bits: evaluations * report_overhead_bits(cfg, num_tx_antennas),
        slot_fraction: if num_slots == 0 { 0.0 } else { evaluations as f64 / num_slots as f64 },
    }
}
