use num_complex::Complex64;

use crate::linalg::CVec;
use crate::{Error, Result};

/// Tolerance on the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// A unit-norm complex beamforming vector of length at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder(CVec);

impl Precoder {
    /// Normalises `coeffs` into a precoder.
    pub fn from_unnormalized(coeffs: CVec) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::invalid(format!("precoder length {} < 2", coeffs.len())));
        }
        Ok(Precoder(crate::linalg::normalize(&coeffs)?))
    }

    pub fn from_slice(coeffs: &[Complex64]) -> Result<Self> {
        Self::from_unnormalized(CVec::from_column_slice(coeffs))
    }

    /// Wraps an already unit-norm vector, rejecting it if the norm is off.
    pub fn new(coeffs: CVec) -> Result<Self> {
        let n = coeffs.norm();
        if coeffs.len() < 2 || (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid(format!(
                "not a unit-norm precoder (len {}, norm {n})",
                coeffs.len()
            )));
        }
        Ok(Precoder(coeffs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &CVec {
        &self.0
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn into_vector(self) -> CVec {
        self.0
    }

    /// `self^H other`.
    pub fn inner(&self, other: &Precoder) -> Complex64 {
        self.0.dotc(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalises() {
        let p = Precoder::from_slice(&[Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)]).unwrap();
        assert!((p.as_vector().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_and_zero() {
        assert!(Precoder::from_slice(&[Complex64::new(1.0, 0.0)]).is_err());
        assert!(Precoder::from_slice(&[Complex64::new(0.0, 0.0); 4]).is_err());
        assert!(Precoder::new(CVec::from_element(4, Complex64::new(1.0, 0.0))).is_err());
    }
}
