//! Two-sided linear autoencoder for CSI compression.
//!
//! The encoder projects a precoder onto an `L`-dimensional complex latent
//! (`z = E w`), optionally quantising the real and imaginary part of every
//! latent component with `B` bits. The decoder maps the (dequantised) latent
//! back with `D z` and normalises.
//!
//! Parameter layout, shared by every encoder/decoder in the crate:
//!
//! - encoder: `basis` (`L x N`), `meta.quant` (`1 x (1 + L)`: bits, ranges)
//! - single-vendor decoder: `basis` (`N x L`), `meta.quant` as above
//! - multi-vendor decoder: `basis` (`N x V L`), `meta.quant`
//!   (`V x (1 + L)`), `meta.vendors` (`1 x V`)

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{content_id, ModelDescriptor, ModelIdentity, ModelKind, ModelPackage, Param};
use crate::linalg::{normalize, top_left_singular, CMat, CVec};
use crate::{Error, Precoder, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    /// Bits per real latent component; 0 disables quantisation.
    pub bits_per_dim: u32,
    pub input_dim: usize,
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim > self.input_dim {
            return Err(Error::invalid(format!(
                "latent_dim {} outside 1..={}",
                self.latent_dim, self.input_dim
            )));
        }
        if self.bits_per_dim > 16 {
            return Err(Error::invalid("bits_per_dim must be at most 16"));
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        format!("CsiCompression-L{}-B{}", self.latent_dim, self.bits_per_dim)
    }
}

/// Per-dimension uniform midrise quantiser over `[-r_l, r_l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    pub bits: u32,
    pub ranges: Vec<f64>,
}

impl Quantizer {
    /// Ranges are the largest real or imaginary magnitude seen per dimension.
    pub fn fit(bits: u32, latents: &[CVec]) -> Self {
        let l = latents.first().map_or(0, |z| z.len());
        let mut ranges = vec![0.0f64; l];
        for z in latents {
            for (r, c) in ranges.iter_mut().zip(z.iter()) {
                *r = r.max(c.re.abs()).max(c.im.abs());
            }
        }
        for r in &mut ranges {
            if !(*r > 0.0) {
                *r = f64::EPSILON;
            }
        }
        Quantizer { bits, ranges }
    }

    pub fn levels(&self) -> u32 {
        1u32 << self.bits
    }

    pub fn step(&self, dim: usize) -> f64 {
        2.0 * self.ranges[dim] / self.levels() as f64
    }

    /// Out-of-range values clamp to the edge cells.
    pub fn quantize(&self, x: f64, dim: usize) -> u32 {
        let idx = ((x + self.ranges[dim]) / self.step(dim)).floor();
        idx.clamp(0.0, (self.levels() - 1) as f64) as u32
    }

    pub fn dequantize(&self, idx: u32, dim: usize) -> f64 {
        -self.ranges[dim] + (idx as f64 + 0.5) * self.step(dim)
    }

    pub fn feedback_bits(&self) -> usize {
        2 * self.ranges.len() * self.bits as usize
    }

    pub(crate) fn to_row(&self) -> Vec<f64> {
        std::iter::once(self.bits as f64).chain(self.ranges.iter().copied()).collect()
    }

    pub(crate) fn from_row(row: &[f64]) -> Result<Self> {
        let (bits, ranges) = row.split_first().ok_or_else(|| Error::Format("empty quantiser row".into()))?;
        if *bits < 0.0 || *bits > 16.0 || bits.fract() != 0.0 {
            return Err(Error::Format(format!("bad quantiser bit count {bits}")));
        }
        Ok(Quantizer { bits: *bits as u32, ranges: ranges.to_vec() })
    }

    /// Encodes a latent as bits: for each component, B bits of the real part
    /// then B bits of the imaginary part, most significant first.
    pub fn encode(&self, z: &CVec) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.feedback_bits());
        for (d, c) in z.iter().enumerate() {
            for part in [c.re, c.im] {
                let q = self.quantize(part, d);
                for b in (0..self.bits).rev() {
                    out.push(((q >> b) & 1) as u8);
                }
            }
        }
        out
    }

    pub fn decode(&self, bits: &[u8]) -> Result<CVec> {
        if bits.len() != self.feedback_bits() {
            return Err(Error::DimensionMismatch { expected: self.feedback_bits(), actual: bits.len() });
        }
        let b = self.bits as usize;
        let mut z = CVec::zeros(self.ranges.len());
        for d in 0..self.ranges.len() {
            let mut parts = [0.0; 2];
            for (p, part) in parts.iter_mut().enumerate() {
                let chunk = &bits[(2 * d + p) * b..(2 * d + p + 1) * b];
                let q = chunk.iter().try_fold(0u32, |acc, &bit| match bit {
                    0 | 1 => Ok((acc << 1) | bit as u32),
                    _ => Err(Error::invalid("feedback bits must be 0 or 1")),
                })?;
                *part = self.dequantize(q, d);
            }
            z[d] = Complex64::new(parts[0], parts[1]);
        }
        Ok(z)
    }
}

/// Latent message sent from encoder to decoder.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// Unquantised complex latent (`B = 0`).
    Latent(Vec<Complex64>),
    /// `2 L B` bits, each stored as 0 or 1.
    Bits(Vec<u8>),
}

impl Feedback {
    pub fn len(&self) -> usize {
        match self {
            Feedback::Latent(z) => z.len(),
            Feedback::Bits(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn quantizer_of(model: &ModelPackage, row: usize) -> Result<Quantizer> {
    let q = model.real("meta.quant")?;
    if row >= q.nrows() {
        return Err(Error::Format(format!("quantiser row {row} missing")));
    }
    Quantizer::from_row(&q.row(row).iter().copied().collect::<Vec<_>>())
}

pub(crate) fn quant_param(rows: &[Quantizer]) -> Param {
    let width = rows.first().map_or(1, |q| q.ranges.len() + 1);
    let data: Vec<f64> = rows.iter().flat_map(|q| q.to_row()).collect();
    Param::real("meta.quant", DMatrix::from_row_slice(rows.len(), width, &data))
}

/// Builds a single-vendor decoder package around `basis` (`N x L`).
pub(crate) fn decoder_package(
    identity: ModelIdentity,
    basis: CMat,
    quantizer: &Quantizer,
    associated_id: Option<String>,
) -> ModelPackage {
    let mut d = ModelDescriptor::new(identity);
    d.associated_id = associated_id;
    ModelPackage::sealed(d, ModelKind::CsiDecoder, vec![Param::complex("basis", basis), quant_param(&[quantizer.clone()])])
}

pub(crate) fn encoder_package(
    identity: ModelIdentity,
    basis: CMat,
    quantizer: &Quantizer,
    associated_id: Option<String>,
) -> ModelPackage {
    let mut d = ModelDescriptor::new(identity);
    d.associated_id = associated_id;
    ModelPackage::sealed(d, ModelKind::CsiEncoder, vec![Param::complex("basis", basis), quant_param(&[quantizer.clone()])])
}

pub(crate) fn samples_matrix(targets: &[Precoder]) -> Result<CMat> {
    let n = targets.first().map(|t| t.len()).ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let mut x = CMat::zeros(n, targets.len());
    for (s, t) in targets.iter().enumerate() {
        if t.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: t.len() });
        }
        x.set_column(s, t.as_vector());
    }
    Ok(x)
}

/// Joint (single-entity) training: the encoder projects onto the top-`L`
/// left singular vectors of the sample matrix and the decoder is its
/// conjugate transpose. Both sides share a fresh associated ID derived from
/// the learned parameters.
pub fn train_autoencoder_joint(
    targets: &[Precoder],
    cfg: &AutoencoderConfig,
    name: &str,
) -> Result<(ModelPackage, ModelPackage)> {
    cfg.validate()?;
    if targets.len() < cfg.latent_dim {
        return Err(Error::InsufficientData { needed: cfg.latent_dim, got: targets.len() });
    }
    let x = samples_matrix(targets)?;
    if x.nrows() != cfg.input_dim {
        return Err(Error::DimensionMismatch { expected: cfg.input_dim, actual: x.nrows() });
    }
    let u = top_left_singular(&x, cfg.latent_dim)?;
    let enc = u.adjoint();
    let latents: Vec<CVec> = x.column_iter().map(|c| &enc * c).collect();
    let quantizer = Quantizer::fit(cfg.bits_per_dim, &latents);

    let mut buf = Vec::new();
    crate::container::write_params(&mut buf, &[Param::complex("basis", u.clone()), quant_param(&[quantizer.clone()])]);
    let aid = content_id("aid", &[name.as_bytes(), &buf]);

    let tag = cfg.tag();
    let encoder = encoder_package(ModelIdentity::new(format!("{name}-enc"), 1, &tag), enc, &quantizer, Some(aid.clone()));
    let decoder = decoder_package(ModelIdentity::new(format!("{name}-dec"), 1, &tag), u, &quantizer, Some(aid));
    Ok((encoder, decoder))
}

/// Raw latent `E w`, before quantisation.
pub(crate) fn project(encoder: &ModelPackage, target: &Precoder) -> Result<CVec> {
    encoder.expect_kind(ModelKind::CsiEncoder)?;
    let basis = encoder.complex("basis")?;
    if basis.ncols() != target.len() {
        return Err(Error::DimensionMismatch { expected: basis.ncols(), actual: target.len() });
    }
    Ok(basis * target.as_vector())
}

pub fn encode_csi(encoder: &ModelPackage, target: &Precoder) -> Result<Feedback> {
    let z = project(encoder, target)?;
    let q = quantizer_of(encoder, 0)?;
    if q.ranges.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), actual: q.ranges.len() });
    }
    Ok(if q.bits == 0 { Feedback::Latent(z.as_slice().to_vec()) } else { Feedback::Bits(q.encode(&z)) })
}

fn latent_of(q: &Quantizer, feedback: &Feedback) -> Result<CVec> {
    match (q.bits, feedback) {
        (0, Feedback::Latent(z)) => {
            if z.len() != q.ranges.len() {
                return Err(Error::DimensionMismatch { expected: q.ranges.len(), actual: z.len() });
            }
            Ok(CVec::from_column_slice(z))
        }
        (b, Feedback::Bits(bits)) if b > 0 => q.decode(bits),
        _ => Err(Error::invalid("feedback format does not match the decoder's quantiser")),
    }
}

/// Dequantised latent for a single-vendor decoder (or a given vendor row of
/// a multi-vendor one).
pub(crate) fn dequantized_latent(decoder: &ModelPackage, row: usize, feedback: &Feedback) -> Result<CVec> {
    latent_of(&quantizer_of(decoder, row)?, feedback)
}

pub fn decode_csi(decoder: &ModelPackage, feedback: &Feedback) -> Result<Precoder> {
    decoder.expect_kind(ModelKind::CsiDecoder)?;
    if decoder.param("meta.vendors").is_ok() {
        return Err(Error::invalid("multi-vendor decoder needs a vendor index; use decode_csi_indexed"));
    }
    let z = dequantized_latent(decoder, 0, feedback)?;
    let basis = decoder.complex("basis")?;
    if basis.ncols() != z.len() {
        return Err(Error::DimensionMismatch { expected: basis.ncols(), actual: z.len() });
    }
    Precoder::new(normalize(&(basis * z))?)
}

/// Decodes with a multi-vendor decoder for the encoder with `vendor_index`.
pub fn decode_csi_indexed(decoder: &ModelPackage, vendor_index: u32, feedback: &Feedback) -> Result<Precoder> {
    decoder.expect_kind(ModelKind::CsiDecoder)?;
    let vendors = decoder.real("meta.vendors")?;
    let slot = vendors
        .iter()
        .position(|&v| v == vendor_index as f64)
        .ok_or_else(|| Error::NotFound(format!("vendor index {vendor_index}")))?;
    let count = vendors.len();
    let z = dequantized_latent(decoder, slot, feedback)?;
    let l = z.len();
    let basis = decoder.complex("basis")?;
    if basis.ncols() != count * l {
        return Err(Error::DimensionMismatch { expected: count * l, actual: basis.ncols() });
    }
    let mut input = CVec::zeros(count * l);
    input.rows_mut(slot * l, l).copy_from(&z);
    Precoder::new(normalize(&(basis * input))?)
}
