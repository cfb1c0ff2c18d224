//! One-sided CSI predictor: a matrix-tap linear autoregression on measured
//! precoders.
//!
//! The prediction of the precoder `horizon` slots ahead is
//! `normalize(sum_k W_k m_{t-k})` over the `order` most recent measurements,
//! followed by any adaptation stages attached through [`super::apply_delta`].

use nalgebra::DMatrix;

use super::{ModelDescriptor, ModelIdentity, ModelKind, ModelPackage, Param};
use crate::channel::CsiMeasurement;
use crate::kpi::derive_input_descriptor;
use crate::linalg::{normalize, ridge_fit_c, CMat, CVec};
use crate::{Error, Precoder, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorConfig {
    pub order: usize,
    pub horizon_slots: usize,
}

impl PredictorConfig {
    pub fn new(order: usize, horizon_slots: usize) -> Result<Self> {
        if order == 0 || horizon_slots == 0 {
            return Err(Error::invalid("predictor order and horizon must be at least 1"));
        }
        Ok(PredictorConfig { order, horizon_slots })
    }

    pub fn min_history(&self) -> usize {
        self.order + self.horizon_slots + 10
    }
}

/// Least-squares fit on a measurement history. `beam_powers`, when not
/// empty, must be aligned with `history` and is used for the model's input
/// descriptor.
pub fn train_predictor(
    history: &[CsiMeasurement],
    beam_powers: &[Vec<f64>],
    cfg: &PredictorConfig,
    identity: ModelIdentity,
) -> Result<ModelPackage> {
    if cfg.order == 0 || cfg.horizon_slots == 0 {
        return Err(Error::invalid("predictor order and horizon must be at least 1"));
    }
    if history.len() < cfg.min_history() {
        return Err(Error::InsufficientData { needed: cfg.min_history(), got: history.len() });
    }
    let n = history[0].measured_precoder.len();
    if let Some(m) = history.iter().find(|m| m.measured_precoder.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, actual: m.measured_precoder.len() });
    }

    let samples = history.len() - cfg.order + 1 - cfg.horizon_slots;
    let mut x = CMat::zeros(cfg.order * n, samples);
    let mut y = CMat::zeros(n, samples);
    for s in 0..samples {
        let t = s + cfg.order - 1;
        for k in 0..cfg.order {
            x.view_mut((k * n, s), (n, 1))
                .copy_from(history[t - k].measured_precoder.as_vector());
        }
        y.set_column(s, history[t + cfg.horizon_slots].measured_precoder.as_vector());
    }
    let w = ridge_fit_c(&x, &y)?;

    let mut params: Vec<Param> = (0..cfg.order)
        .map(|k| Param::complex(format!("tap.{k}"), w.columns(k * n, n).into_owned()))
        .collect();
    params.push(Param::real(
        "meta.config",
        DMatrix::from_row_slice(1, 2, &[cfg.order as f64, cfg.horizon_slots as f64]),
    ));

    let mut descriptor = ModelDescriptor::new(identity);
    if !beam_powers.is_empty() {
        descriptor.input_descriptor = Some(derive_input_descriptor(history, beam_powers)?);
    }
    Ok(ModelPackage::sealed(descriptor, ModelKind::CsiPredictor, params))
}

pub fn predictor_config(model: &ModelPackage) -> Result<PredictorConfig> {
    model.expect_kind(ModelKind::CsiPredictor)?;
    let m = model.real("meta.config")?;
    if m.len() != 2 {
        return Err(Error::Format("predictor meta.config must hold [order, horizon]".into()));
    }
    PredictorConfig::new(m[0] as usize, m[1] as usize)
}

/// Predicts the precoder `horizon` slots after the last entry of `recent`
/// (ordered oldest to newest).
pub fn predict_csi(model: &ModelPackage, recent: &[CsiMeasurement]) -> Result<Precoder> {
    let cfg = predictor_config(model)?;
    if recent.len() < cfg.order {
        return Err(Error::InsufficientData { needed: cfg.order, got: recent.len() });
    }
    let latest = recent.len() - 1;
    let tap0 = model.complex("tap.0")?;
    let n = tap0.nrows();
    let mut y = CVec::zeros(n);
    for k in 0..cfg.order {
        let tap = model.complex(&format!("tap.{k}"))?;
        let m = recent[latest - k].measured_precoder.as_vector();
        if m.len() != tap.ncols() {
            return Err(Error::DimensionMismatch { expected: tap.ncols(), actual: m.len() });
        }
        y += tap * m;
    }
    let mut y = normalize(&y)?;
    for stage in 0.. {
        let Ok(left) = model.complex(&format!("adapt.{stage}.left")) else { break };
        let right = model.complex(&format!("adapt.{stage}.right"))?;
        y = apply_stage(&y, left, right)?;
    }
    Precoder::new(y)
}

/// `normalize((I + L R^H) y)`.
pub(crate) fn apply_stage(y: &CVec, left: &CMat, right: &CMat) -> Result<CVec> {
    let coeff = right.adjoint() * y;
    let out = y + left * coeff;
    normalize(&out)
}

/// Direct recomputation of the tap sum, kept separate from [`predict_csi`]
/// for cross-checking in tests.
#[cfg(test)]
fn explicit_prediction(taps: &[CMat], recent: &[&Precoder]) -> CVec {
    use num_complex::Complex64;
    let n = taps[0].nrows();
    let mut y = CVec::zeros(n);
    for (k, tap) in taps.iter().enumerate() {
        let m = recent[recent.len() - 1 - k].as_vector();
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..m.len() {
                acc += tap[(i, j)] * m[j];
            }
            y[i] += acc;
        }
    }
    y
}
