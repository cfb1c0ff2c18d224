//! KPI derivation and input-distribution descriptors.

use num_complex::Complex64;

use crate::channel::CsiMeasurement;
use crate::{Error, Precoder, Result};

/// SNR reported for noise-free measurements and the cap applied to
/// descriptor SNR averages.
pub const SNR_CAP_DB: f64 = 60.0;

/// Squared generalised cosine similarity between arbitrary complex vectors:
/// `|a^H b|^2 / (|a|^2 |b|^2)`.
pub fn sgcs_vectors(pred: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), actual: pred.len() });
    }
    let mut inner = Complex64::new(0.0, 0.0);
    let mut pa = 0.0;
    let mut pb = 0.0;
    for (a, b) in pred.iter().zip(truth) {
        inner += a.conj() * b;
        pa += a.norm_sqr();
        pb += b.norm_sqr();
    }
    if !(pa > 0.0 && pb > 0.0) {
        return Err(Error::Degenerate("SGCS of a zero vector"));
    }
    Ok((inner.norm_sqr() / (pa * pb)).clamp(0.0, 1.0))
}

pub fn sgcs(pred: &Precoder, truth: &Precoder) -> Result<f64> {
    sgcs_vectors(pred.as_slice(), truth.as_slice())
}

/// `|pred - truth|^2 / |truth|^2`.
pub fn nmse_vectors(pred: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), actual: pred.len() });
    }
    let mut err = 0.0;
    let mut pt = 0.0;
    for (a, b) in pred.iter().zip(truth) {
        err += (a - b).norm_sqr();
        pt += b.norm_sqr();
    }
    if !(pt > 0.0) {
        return Err(Error::Degenerate("NMSE against a zero reference"));
    }
    Ok(err / pt)
}

pub fn nmse(pred: &Precoder, truth: &Precoder) -> Result<f64> {
    nmse_vectors(pred.as_slice(), truth.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpiKind {
    Sgcs,
    Nmse,
    BeamTopK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiSample {
    pub slot_index: u64,
    pub kind: KpiKind,
    pub value: f64,
    pub model_id: String,
    pub model_version: u32,
}

/// Indices of the `k` largest entries, ties broken by lowest index.
pub fn top_k(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!("K = {k} outside 1..={}", values.len())));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamKpiConfig {
    /// Window of most recent monitoring intervals.
    pub n: usize,
    /// Best measured beams considered.
    pub m: usize,
    /// Predicted beams considered.
    pub k: usize,
}

/// Fraction of the last `n` intervals in which at least one of the `m` best
/// measured beams is among the `k` best predicted beams.
pub fn beam_topk_accuracy(history: &[(Vec<f64>, Vec<f64>)], cfg: &BeamKpiConfig) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if cfg.n == 0 {
        return Err(Error::invalid("beam KPI window N must be at least 1"));
    }
    let window = &history[history.len().saturating_sub(cfg.n)..];
    let mut hits = 0usize;
    for (predicted, measured) in window {
        if predicted.len() != measured.len() {
            return Err(Error::DimensionMismatch { expected: measured.len(), actual: predicted.len() });
        }
        let pk = top_k(predicted, cfg.k)?;
        let mm = top_k(measured, cfg.m)?;
        if pk.iter().any(|i| mm.contains(i)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / window.len() as f64)
}

/// Compact summary of model-input statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDescriptor {
    /// Average per-beam power, normalised to sum 1.
    pub mean_beam_power: Vec<f64>,
    /// Doppler estimate in cycles per slot.
    pub doppler_estimate: f64,
    pub mean_snr_db: f64,
    pub window_len: usize,
}

/// Builds an [`InputDescriptor`] from a window of measurements and the
/// matching per-beam powers.
///
/// The Doppler estimate is `arccos(c) / 2 pi` where `c` is the mean lag-1
/// `|m_t^H m_{t+1}|`, scaled by `1 + 10^(-snr/10)` to undo the shrinkage that
/// measurement noise causes after re-normalisation, then clamped to `[0, 1]`.
pub fn derive_input_descriptor(measurements: &[CsiMeasurement], beam_powers: &[Vec<f64>]) -> Result<InputDescriptor> {
    if measurements.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if beam_powers.len() != measurements.len() {
        return Err(Error::DimensionMismatch { expected: measurements.len(), actual: beam_powers.len() });
    }
    let nb = beam_powers[0].len();
    let mut mean = vec![0.0; nb];
    for p in beam_powers {
        if p.len() != nb {
            return Err(Error::DimensionMismatch { expected: nb, actual: p.len() });
        }
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v.max(0.0);
        }
    }
    let total: f64 = mean.iter().sum();
    if total > 0.0 {
        mean.iter_mut().for_each(|m| *m /= total);
    } else {
        mean.iter_mut().for_each(|m| *m = 1.0 / nb as f64);
    }

    let doppler_estimate = if measurements.len() < 2 {
        0.0
    } else {
        let c: f64 = measurements
            .windows(2)
            .map(|w| {
                let raw = w[0].measured_precoder.inner(&w[1].measured_precoder).norm();
                let noise = |snr: f64| if snr.is_finite() { 10f64.powf(-snr / 10.0) } else { 0.0 };
                raw * (1.0 + 0.5 * (noise(w[0].snr_db) + noise(w[1].snr_db)))
            })
            .sum::<f64>()
            / (measurements.len() - 1) as f64;
        c.clamp(0.0, 1.0).acos() / std::f64::consts::TAU
    };

    let mean_snr_db = measurements.iter().map(|m| m.snr_db.min(SNR_CAP_DB)).sum::<f64>() / measurements.len() as f64;

    Ok(InputDescriptor { mean_beam_power: mean, doppler_estimate, mean_snr_db, window_len: measurements.len() })
}

/// Term weights for [`descriptor_divergence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceWeights {
    pub js: f64,
    pub doppler: f64,
    /// Applied to `|delta snr_db| / 30`.
    pub snr: f64,
}

impl Default for DivergenceWeights {
    fn default() -> Self {
        DivergenceWeights { js: 1.0, doppler: 1.0, snr: 1.0 }
    }
}

impl DivergenceWeights {
    /// The same weights without the SNR term: divergence of the channel
    /// statistics alone.
    pub fn channel_only(self) -> Self {
        DivergenceWeights { snr: 0.0, ..self }
    }
}

/// Jensen–Shannon divergence in nats.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), actual: q.len() });
    }
    let kl_to_mid = |a: &[f64]| -> f64 {
        a.iter()
            .zip(p.iter().zip(q))
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, (pi, qi))| x * (x / (0.5 * (pi + qi))).ln())
            .sum()
    };
    Ok((0.5 * kl_to_mid(p) + 0.5 * kl_to_mid(q)).max(0.0))
}

pub fn descriptor_divergence(a: &InputDescriptor, b: &InputDescriptor, w: &DivergenceWeights) -> Result<f64> {
    let js = jensen_shannon(&a.mean_beam_power, &b.mean_beam_power)?;
    let dd = (a.doppler_estimate - b.doppler_estimate).abs();
    let ds = (a.mean_snr_db - b.mean_snr_db).abs() / 30.0;
    Ok(w.js * js + w.doppler * dd + w.snr * ds)
}
