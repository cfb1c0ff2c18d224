//! Linear surrogate models and the package types that carry them.
//!
//! Every model is a [`ModelPackage`]: a descriptor plus an ordered list of
//! named real or complex matrices. Parameters whose name starts with
//! `meta.` hold configuration (quantiser ranges, tap counts) and are not
//! counted as inference work.

pub(crate) mod autoencoder;
mod beam;
mod delta;
mod predictor;

pub use autoencoder::{
    decode_csi, decode_csi_indexed, encode_csi, train_autoencoder_joint, AutoencoderConfig, Feedback, Quantizer,
};
pub use beam::{predict_beams, train_beam_predictor};
pub use delta::{apply_delta, fit_adaptation_delta, DeltaPackage};
pub use predictor::{predict_csi, predictor_config, train_predictor, PredictorConfig};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::kpi::InputDescriptor;
use crate::linalg::CMat;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    CsiPredictor,
    CsiEncoder,
    CsiDecoder,
    BeamPredictor,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::CsiPredictor => "csi_predictor",
            ModelKind::CsiEncoder => "csi_encoder",
            ModelKind::CsiDecoder => "csi_decoder",
            ModelKind::BeamPredictor => "beam_predictor",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csi_predictor" => Ok(ModelKind::CsiPredictor),
            "csi_encoder" => Ok(ModelKind::CsiEncoder),
            "csi_decoder" => Ok(ModelKind::CsiDecoder),
            "beam_predictor" => Ok(ModelKind::BeamPredictor),
            other => Err(Error::Format(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Who a model is: identifier, version and the functionality it serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelIdentity {
    pub model_id: String,
    pub model_version: u32,
    pub functionality_tag: String,
}

impl ModelIdentity {
    pub fn new(model_id: impl Into<String>, model_version: u32, functionality_tag: impl Into<String>) -> Self {
        ModelIdentity { model_id: model_id.into(), model_version, functionality_tag: functionality_tag.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub model_version: u32,
    pub functionality_tag: String,
    /// Two-sided pairing key.
    pub associated_id: Option<String>,
    /// Associated IDs of every source dataset (multi-vendor decoders).
    pub source_ids: Vec<String>,
    pub input_descriptor: Option<InputDescriptor>,
    /// SHA-256 of the serialised parameter blocks.
    pub payload_checksum: [u8; 32],
    pub flops_per_inference: u64,
    pub storage_bytes: u64,
}

impl ModelDescriptor {
    pub fn new(identity: ModelIdentity) -> Self {
        ModelDescriptor {
            model_id: identity.model_id,
            model_version: identity.model_version,
            functionality_tag: identity.functionality_tag,
            associated_id: None,
            source_ids: Vec::new(),
            input_descriptor: None,
            payload_checksum: [0; 32],
            flops_per_inference: 0,
            storage_bytes: 0,
        }
    }

    pub fn key(&self) -> ModelKey {
        ModelKey { model_id: self.model_id.clone(), version: self.model_version }
    }
}

/// `(model_id, version)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelKey {
    pub model_id: String,
    pub version: u32,
}

impl ModelKey {
    pub fn new(model_id: impl Into<String>, version: u32) -> Self {
        ModelKey { model_id: model_id.into(), version }
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@v{}", self.model_id, self.version)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Real(DMatrix<f64>),
    Complex(CMat),
}

impl ParamValue {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            ParamValue::Real(m) => m.shape(),
            ParamValue::Complex(m) => m.shape(),
        }
    }

    /// Number of stored real scalars.
    pub fn real_count(&self) -> usize {
        let (r, c) = self.shape();
        match self {
            ParamValue::Real(_) => r * c,
            ParamValue::Complex(_) => 2 * r * c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: ParamValue,
}

impl Param {
    pub fn real(name: impl Into<String>, m: DMatrix<f64>) -> Self {
        Param { name: name.into(), value: ParamValue::Real(m) }
    }

    pub fn complex(name: impl Into<String>, m: CMat) -> Self {
        Param { name: name.into(), value: ParamValue::Complex(m) }
    }

    pub fn is_meta(&self) -> bool {
        self.name.starts_with("meta.")
    }
}

/// Real operations per inference: a complex multiply-add is 8 real ops, a
/// real one is 2.
pub fn flops_for(params: &[Param]) -> u64 {
    params
        .iter()
        .filter(|p| !p.is_meta())
        .map(|p| {
            let (r, c) = p.value.shape();
            let per = match p.value {
                ParamValue::Real(_) => 2,
                ParamValue::Complex(_) => 8,
            };
            (per * r * c) as u64
        })
        .sum()
}

/// 8 bytes per stored real scalar.
pub fn storage_for(params: &[Param]) -> u64 {
    params.iter().map(|p| 8 * p.value.real_count() as u64).sum()
}

pub fn payload_checksum(params: &[Param]) -> [u8; 32] {
    let mut buf = Vec::new();
    crate::container::write_params(&mut buf, params);
    Sha256::digest(&buf).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPackage {
    pub descriptor: ModelDescriptor,
    pub kind: ModelKind,
    pub params: Vec<Param>,
}

impl ModelPackage {
    /// Builds a package and fills in flops, storage and checksum.
    pub fn sealed(descriptor: ModelDescriptor, kind: ModelKind, params: Vec<Param>) -> Self {
        let mut p = ModelPackage { descriptor, kind, params };
        p.reseal();
        p
    }

    /// Recomputes the derived descriptor fields after a parameter change.
    pub fn reseal(&mut self) {
        self.descriptor.flops_per_inference = flops_for(&self.params);
        self.descriptor.storage_bytes = storage_for(&self.params);
        self.descriptor.payload_checksum = payload_checksum(&self.params);
    }

    pub fn verify(&self) -> Result<()> {
        if payload_checksum(&self.params) != self.descriptor.payload_checksum {
            return Err(Error::Integrity(format!("payload checksum mismatch for {}", self.descriptor.key())));
        }
        Ok(())
    }

    pub fn key(&self) -> ModelKey {
        self.descriptor.key()
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch { expected: kind.to_string(), actual: self.kind.to_string() });
        }
        Ok(())
    }

    pub fn param(&self, name: &str) -> Result<&ParamValue> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Format(format!("{} lacks parameter {name:?}", self.descriptor.key())))
    }

    pub fn complex(&self, name: &str) -> Result<&CMat> {
        match self.param(name)? {
            ParamValue::Complex(m) => Ok(m),
            ParamValue::Real(_) => Err(Error::Format(format!("parameter {name:?} is not complex"))),
        }
    }

    pub fn real(&self, name: &str) -> Result<&DMatrix<f64>> {
        match self.param(name)? {
            ParamValue::Real(m) => Ok(m),
            ParamValue::Complex(_) => Err(Error::Format(format!("parameter {name:?} is not real"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        crate::container::encode_model(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        crate::container::decode_model(bytes)
    }
}

/// Deterministic pairing identifier derived from arbitrary content.
pub(crate) fn content_id(prefix: &str, parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    let hex: String = d[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("{prefix}-{hex}")
}
