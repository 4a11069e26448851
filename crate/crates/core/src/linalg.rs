//! Small dense helpers on top of nalgebra shared by the tree algorithms.

use nalgebra::linalg::{Cholesky, LU};
use nalgebra::{DMatrix, DVector, Dyn};

use crate::rlr::LogDet;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type Chol = Cholesky<f64, Dyn>;

/// Inverse of a general square matrix through partially pivoted LU, together
/// with its log-determinant. `None` on an exactly singular or non-finite pivot.
pub fn lu_inverse(m: Mat) -> Option<(Mat, LogDet)> {
    let n = m.nrows();
    if n == 0 {
        return Some((m, LogDet::ONE));
    }
    let lu = LU::new(m);
    let mut log_abs = 0.0;
    let mut sign = lu.p().determinant::<f64>();
    {
        let u = lu.u();
        for i in 0..n {
            let p = u[(i, i)];
            if p == 0.0 || !p.is_finite() {
                return None;
            }
            if p < 0.0 {
                sign = -sign;
            }
            log_abs += libm::log(p.abs());
        }
    }
    let inv = lu.try_inverse()?;
    if inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((inv, LogDet::new(log_abs, if sign > 0.0 { 1 } else { -1 })))
}

/// Solves `m x = b` with partial pivoting.
pub fn lu_solve(m: Mat, b: &Mat) -> Option<Mat> {
    let x = LU::new(m).solve(b)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}

/// Cholesky factorization; `None` when the matrix is not numerically PD.
pub fn cholesky(m: Mat) -> Option<Chol> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let c = Cholesky::new(m)?;
    let l = c.l_dirty();
    if (0..l.nrows()).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
        return None;
    }
    Some(c)
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn frobenius(m: &Mat) -> f64 {
    libm::sqrt(m.iter().map(|v| v * v).sum::<f64>())
}
