//! Low-rank adaptation of a deployed CSI predictor.

use super::predictor::predictor_config;
use super::{ModelKind, ModelPackage, Param};
use crate::container::{Container, KIND_DELTA};
use crate::linalg::{low_rank_factors, ridge_fit_c_scaled, CMat};

/// Relative ridge strength of the delta fit.
pub const DELTA_RIDGE: f64 = 0.1;
use crate::{Error, Precoder, Result};

/// Correction `y -> normalize((I + left right^H) y)` for one base model
/// version.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPackage {
    pub base_model_id: String,
    pub base_model_version: u32,
    pub rank: usize,
    pub left: CMat,
    pub right: CMat,
    pub size_bytes: u64,
}

impl DeltaPackage {
    fn params(&self) -> Vec<Param> {
        vec![
            Param::complex("left", self.left.clone()),
            Param::complex("right", self.right.clone()),
        ]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut c = Container::new(KIND_DELTA);
        c.push("base_model_id", &self.base_model_id);
        c.push("base_model_version", self.base_model_version);
        c.push("rank", self.rank);
        c.push("size_bytes", self.size_bytes);
        c.params = self.params();
        c.encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::decode(bytes)?;
        if c.kind() != KIND_DELTA {
            return Err(Error::Format(format!("expected DELTA container, found {:?}", c.kind())));
        }
        let get = |name: &str| match c.param(name)? {
            super::ParamValue::Complex(m) => Ok(m.clone()),
            _ => Err(Error::Format(format!("delta matrix {name:?} must be complex"))),
        };
        Ok(DeltaPackage {
            base_model_id: c.require("base_model_id")?.to_string(),
            base_model_version: c.parse("base_model_version")?,
            rank: c.parse("rank")?,
            left: get("left")?,
            right: get("right")?,
            size_bytes: c.parse("size_bytes")?,
        })
    }
}

/// Fits a correction from `(predicted, ground_truth)` pairs.
///
/// The full correction `C` minimises `sum |gt - pred - C pred|^2`
/// (ridge-regularised towards no correction) and is then truncated to its
/// best rank-`rank` approximation.
pub fn fit_adaptation_delta(base: &ModelPackage, pairs: &[(Precoder, Precoder)], rank: usize) -> Result<DeltaPackage> {
    predictor_config(base)?;
    if pairs.len() < rank + 5 {
        return Err(Error::InsufficientData { needed: rank + 5, got: pairs.len() });
    }
    let n = base.complex("tap.0")?.nrows();
    if rank == 0 || rank > n {
        return Err(Error::invalid(format!("delta rank {rank} outside 1..={n}")));
    }
    let mut x = CMat::zeros(n, pairs.len());
    let mut y = CMat::zeros(n, pairs.len());
    for (s, (pred, gt)) in pairs.iter().enumerate() {
        if pred.len() != n || gt.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: pred.len().max(gt.len()) });
        }
        x.set_column(s, pred.as_vector());
        y.set_column(s, &(gt.as_vector() - pred.as_vector()));
    }
    let correction = ridge_fit_c_scaled(&x, &y, DELTA_RIDGE)?;
    let (left, right) = low_rank_factors(&correction, rank);
    let size_bytes = 8 * (2 * (left.len() + right.len())) as u64;
    Ok(DeltaPackage {
        base_model_id: base.descriptor.model_id.clone(),
        base_model_version: base.descriptor.model_version,
        rank,
        left,
        right,
        size_bytes,
    })
}

/// Attaches `delta` as a new adaptation stage. The result keeps the model
/// ID, bumps the version and is re-sealed; `base` is left untouched.
pub fn apply_delta(base: &ModelPackage, delta: &DeltaPackage) -> Result<ModelPackage> {
    base.expect_kind(ModelKind::CsiPredictor)?;
    if delta.base_model_id != base.descriptor.model_id || delta.base_model_version != base.descriptor.model_version {
        return Err(Error::Pairing(format!(
            "delta targets {}@v{}, base is {}",
            delta.base_model_id,
            delta.base_model_version,
            base.key()
        )));
    }
    let n = base.complex("tap.0")?.nrows();
    if delta.left.nrows() != n || delta.right.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: delta.left.nrows() });
    }
    let stage = (0..).find(|k| base.param(&format!("adapt.{k}.left")).is_err()).unwrap();
    let mut out = base.clone();
    for p in delta.params() {
        out.params.push(Param { name: format!("adapt.{stage}.{}", p.name), value: p.value });
    }
    out.descriptor.model_version += 1;
    out.reseal();
    Ok(out)
}
