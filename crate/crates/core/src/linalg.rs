//! Dense linear-algebra helpers shared by the linear models.
//!
//! Samples are stored as matrix columns throughout: a design matrix of
//! `S` samples in dimension `d` is `d x S`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative ridge strength: `lambda = RIDGE_SCALE * trace(G) / dim`.
pub const RIDGE_SCALE: f64 = 1e-6;

pub fn ridge_lambda(gram_trace: f64, dim: usize) -> f64 {
    let l = RIDGE_SCALE * gram_trace / dim.max(1) as f64;
    if l > 0.0 && l.is_finite() {
        l
    } else {
        f64::MIN_POSITIVE.sqrt()
    }
}

/// Complex ridge regression: returns `W` (`n x d`) minimising
/// `sum_i |y_i - W x_i|^2 + lambda |W|_F^2` for columns `x_i` of `x` (`d x S`)
/// and `y_i` of `y` (`n x S`).
pub fn ridge_fit_c(x: &CMat, y: &CMat) -> Result<CMat> {
    ridge_fit_c_scaled(x, y, RIDGE_SCALE)
}

/// [`ridge_fit_c`] with an explicit relative ridge strength `scale`.
pub fn ridge_fit_c_scaled(x: &CMat, y: &CMat, scale: f64) -> Result<CMat> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), actual: y.ncols() });
    }
    let d = x.nrows();
    let mut gram = x * x.adjoint();
    let lambda = ridge_lambda(gram.trace().re, d) * scale / RIDGE_SCALE;
    for i in 0..d {
        gram[(i, i)] += Complex64::new(lambda, 0.0);
    }
    let rhs = x * y.adjoint();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("regularised Gram matrix is not positive definite"))?;
    Ok(chol.solve(&rhs).adjoint())
}

/// Real counterpart of [`ridge_fit_c`].
pub fn ridge_fit_r(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), actual: y.ncols() });
    }
    let d = x.nrows();
    let mut gram = x * x.transpose();
    let lambda = ridge_lambda(gram.trace(), d);
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = x * y.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("regularised Gram matrix is not positive definite"))?;
    Ok(chol.solve(&rhs).transpose())
}

/// Top-`rank` left singular vectors of `x`, as columns of an `nrows x rank`
/// matrix, ordered by decreasing singular value.
pub fn top_left_singular(x: &CMat, rank: usize) -> Result<CMat> {
    let n = x.nrows();
    if rank == 0 || rank > n {
        return Err(Error::invalid(format!("rank {rank} outside 1..={n}")));
    }
    // Wide inputs: the Gram matrix has the same left singular vectors.
    let svd = if x.ncols() > n { (x * x.adjoint()).svd(true, false) } else { x.clone().svd(true, false) };
    let u = svd.u.expect("left singular vectors requested");
    if u.ncols() >= rank {
        return Ok(u.columns(0, rank).into_owned());
    }
    // Fewer samples than dimensions: complete the basis with orthonormal
    // directions so the projection stays well defined.
    Ok(complete_basis(&u, rank))
}

fn complete_basis(u: &CMat, rank: usize) -> CMat {
    let n = u.nrows();
    let mut cols: Vec<CVec> = u.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < rank && e < n {
        let mut v = CVec::zeros(n);
        v[e] = Complex64::new(1.0, 0.0);
        for c in &cols {
            let p = c.dotc(&v);
            v -= c * p;
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            cols.push(v / Complex64::new(nrm, 0.0));
        }
        e += 1;
    }
    CMat::from_columns(&cols)
}

/// Best rank-`rank` factorisation `m ~ left * right^H` (Eckart–Young).
/// Singular values are folded into `left`.
pub fn low_rank_factors(m: &CMat, rank: usize) -> (CMat, CMat) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    let r = rank.min(svd.singular_values.len());
    let mut left = CMat::zeros(m.nrows(), rank);
    let mut right = CMat::zeros(m.ncols(), rank);
    for k in 0..r {
        let s = Complex64::new(svd.singular_values[k], 0.0);
        left.set_column(k, &(u.column(k) * s));
        // v_t rows are v^H, so the k-th column of V is the adjoint of row k.
        right.set_column(k, &v_t.row(k).adjoint());
    }
    (left, right)
}

pub fn normalize(v: &CVec) -> Result<CVec> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Degenerate("cannot normalise a zero or non-finite vector"));
    }
    Ok(v / Complex64::new(n, 0.0))
}
