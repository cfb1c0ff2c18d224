//! Beam predictor: infers the full per-beam power vector from a measured
//! subset of beams.
//!
//! Measured beams pass through unchanged; a ridge regression on
//! `[subset powers; 1]` predicts the residual over that pass-through prior.

use nalgebra::DMatrix;

use super::{ModelDescriptor, ModelIdentity, ModelKind, ModelPackage, Param};
use crate::linalg::ridge_fit_r;
use crate::{Error, Result};

fn prior(subset: &[usize], measured: &[f64], codebook_size: usize) -> Vec<f64> {
    let mut out = vec![0.0; codebook_size];
    for (&i, &p) in subset.iter().zip(measured) {
        out[i] = p;
    }
    out
}

fn check_subset(subset: &[usize], codebook_size: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::invalid("measured beam subset is empty"));
    }
    if subset.len() > codebook_size {
        return Err(Error::invalid("measured beam subset larger than the codebook"));
    }
    let mut seen = vec![false; codebook_size];
    for &i in subset {
        if i >= codebook_size || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid(format!("beam index {i} out of range or repeated")));
        }
    }
    Ok(())
}

/// `powers` holds one full per-beam power vector per slot of the training
/// window.
pub fn train_beam_predictor(
    powers: &[Vec<f64>],
    subset: &[usize],
    codebook_size: usize,
    identity: ModelIdentity,
) -> Result<ModelPackage> {
    check_subset(subset, codebook_size)?;
    if powers.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: powers.len() });
    }
    let m = subset.len();
    let mut x = DMatrix::zeros(m + 1, powers.len());
    let mut y = DMatrix::zeros(codebook_size, powers.len());
    for (s, p) in powers.iter().enumerate() {
        if p.len() != codebook_size {
            return Err(Error::DimensionMismatch { expected: codebook_size, actual: p.len() });
        }
        let measured: Vec<f64> = subset.iter().map(|&i| p[i]).collect();
        for (r, v) in measured.iter().enumerate() {
            x[(r, s)] = *v;
        }
        x[(m, s)] = 1.0;
        let base = prior(subset, &measured, codebook_size);
        for b in 0..codebook_size {
            y[(b, s)] = p[b] - base[b];
        }
    }
    let w = ridge_fit_r(&x, &y)?;
    let subset_row = DMatrix::from_iterator(1, m, subset.iter().map(|&i| i as f64));
    Ok(ModelPackage::sealed(
        ModelDescriptor::new(identity),
        ModelKind::BeamPredictor,
        vec![Param::real("weights", w), Param::real("meta.subset", subset_row)],
    ))
}

/// Full power vector predicted from powers of the model's measured subset
/// (in subset order).
pub fn predict_beams(model: &ModelPackage, measured: &[f64]) -> Result<Vec<f64>> {
    model.expect_kind(ModelKind::BeamPredictor)?;
    let w = model.real("weights")?;
    let subset: Vec<usize> = model.real("meta.subset")?.iter().map(|&v| v as usize).collect();
    if measured.len() != subset.len() || w.ncols() != subset.len() + 1 {
        return Err(Error::DimensionMismatch { expected: subset.len(), actual: measured.len() });
    }
    let c = w.nrows();
    let mut out = prior(&subset, measured, c);
    for (b, o) in out.iter_mut().enumerate() {
        let mut acc = w[(b, subset.len())];
        for (r, v) in measured.iter().enumerate() {
            acc += w[(b, r)] * v;
        }
        *o += acc;
    }
    Ok(out)
}
