//! Per-slot metrics table and its CSV form.

use std::fmt::Write as _;

use crate::{Error, Result};

pub const METRICS_HEADER: &str = "slot,sgcs,nmse,loop_state,active_model_id,active_model_version,perf_bad,action,descriptor_divergence,monitor_overhead_bits";

/// One slot. Evaluation-only columns are `None` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub slot: u64,
    pub sgcs: f64,
    pub nmse: f64,
    pub loop_state: String,
    pub active_model_id: Option<String>,
    pub active_model_version: Option<u32>,
    pub perf_bad: Option<bool>,
    pub action: Option<String>,
    pub descriptor_divergence: Option<f64>,
    pub monitor_overhead_bits: Option<u64>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{},{},{},{},{},{}",
            self.slot,
            self.sgcs,
            self.nmse,
            self.loop_state,
            opt(&self.active_model_id),
            opt(&self.active_model_version),
            self.perf_bad.map(|b| if b { "1" } else { "0" }).unwrap_or(""),
            opt(&self.action),
            self.descriptor_divergence.map(|d| format!("{d:.6}")).unwrap_or_default(),
            opt(&self.monitor_overhead_bits),
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("metrics row {line:?}: {m}"));
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 10 {
            return Err(bad("expected 10 columns"));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Option<Option<T>> {
            if s.is_empty() {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        }
        let text = |s: &str| (!s.is_empty()).then(|| s.to_string());
        Ok(MetricsRow {
            slot: c[0].parse().map_err(|_| bad("slot"))?,
            sgcs: c[1].parse().map_err(|_| bad("sgcs"))?,
            nmse: c[2].parse().map_err(|_| bad("nmse"))?,
            loop_state: c[3].to_string(),
            active_model_id: text(c[4]),
            active_model_version: num(c[5]).ok_or_else(|| bad("version"))?,
            perf_bad: match c[6] {
                "" => None,
                "1" => Some(true),
                "0" => Some(false),
                _ => return Err(bad("perf_bad")),
            },
            action: text(c[7]),
            descriptor_divergence: num(c[8]).ok_or_else(|| bad("divergence"))?,
            monitor_overhead_bits: num(c[9]).ok_or_else(|| bad("overhead"))?,
        })
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    let _ = writeln!(s, "{METRICS_HEADER}");
    for r in rows {
        let _ = writeln!(s, "{}", r.to_csv_line());
    }
    s
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Format("metrics header mismatch".into()));
    }
    lines.filter(|l| !l.is_empty()).map(MetricsRow::parse_csv_line).collect()
}

/// Mean SGCS over rows with `from <= slot < to`.
pub fn windowed_mean_sgcs(rows: &[MetricsRow], from: u64, to: u64) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| r.slot >= from && r.slot < to).map(|r| r.sgcs).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
