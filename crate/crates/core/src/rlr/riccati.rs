//! Symmetric solutions of Λ = D + Dᵀ + D Ξ Dᵀ.
//!
//! With D symmetric this is the algebraic Riccati equation
//! Iᵀ D + D I + D Ξ D − Λ = 0 whose Hamiltonian is H = [[I, Ξ], [Λ, −I]].
//! The invariant subspace of H for its positive eigenvalues yields the branch
//! with D → 0 as Λ → 0. When the Schur route is unusable (2×2 blocks from
//! roundoff, an ill-conditioned basis) an eigen-decomposition formula for the
//! same branch takes over.

use nalgebra::linalg::{Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, lu_solve, symmetrize, Mat};

/// How a solution was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Schur,
    Spectral,
    /// Schur with the negative eigenvalues selected (the other branch).
    Complementary,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub d: Mat,
    pub residual: f64,
    pub method: Method,
}

/// ‖D + Dᵀ + D Ξ Dᵀ − Λ‖_F.
pub fn residual(d: &Mat, lambda: &Mat, xi: &Mat) -> f64 {
    let res = d + d.transpose() + d * xi * d.transpose() - lambda;
    frobenius(&res)
}

/// Accepted residual, relative to the size of the data.
pub fn tolerance(lambda: &Mat, xi: &Mat) -> f64 {
    1e-10 * (1.0 + frobenius(lambda)) * (1.0 + frobenius(xi)).max(1.0)
}

/// Solves for the Λ → 0 continuous symmetric branch.
pub fn riccati_solve(lambda: &Mat, xi: &Mat) -> Result<Mat> {
    solve(lambda, xi).map(|s| s.d)
}

pub fn solve(lambda: &Mat, xi: &Mat) -> Result<Solution> {
    let r = lambda.nrows();
    if lambda.ncols() != r || xi.nrows() != r || xi.ncols() != r {
        return Err(Error::DimensionMismatch { expected: r, found: xi.nrows() });
    }
    let tol = tolerance(lambda, xi);
    let accept = |d: Mat, method| {
        let res = residual(&d, lambda, xi);
        (res <= tol && d.iter().all(|v| v.is_finite())).then_some(Solution { d, residual: res, method })
    };
    if let Some(d) = schur_branch(lambda, xi, true) {
        if let Some(s) = accept(d, Method::Schur) {
            return Ok(s);
        }
    }
    match spectral(lambda, xi) {
        Spectral::Unsolvable => return Err(Error::RiccatiUnsolvable { node: None }),
        Spectral::Solved(d) => {
            if let Some(s) = accept(d, Method::Spectral) {
                return Ok(s);
            }
        }
    }
    if let Some(d) = schur_branch(lambda, xi, false) {
        if let Some(s) = accept(d, Method::Complementary) {
            return Ok(s);
        }
    }
    Err(Error::RiccatiUnsolvable { node: None })
}

fn schur_branch(lambda: &Mat, xi: &Mat, positive: bool) -> Option<Mat> {
    let r = lambda.nrows();
    let n = 2 * r;
    let mut h = Mat::zeros(n, n);
    for i in 0..r {
        h[(i, i)] = 1.0;
        h[(r + i, r + i)] = -1.0;
        for j in 0..r {
            h[(i, r + j)] = xi[(i, j)];
            h[(r + i, j)] = lambda[(i, j)];
        }
    }
    let (mut q, mut t) = Schur::try_new(h, f64::EPSILON, 10_000)?.unpack();
    for k in 0..n - 1 {
        let sub = t[(k + 1, k)];
        if sub != 0.0 {
            if sub.abs() > 1e-13 * (t[(k, k)].abs() + t[(k + 1, k + 1)].abs()) {
                return None;
            }
            t[(k + 1, k)] = 0.0;
        }
    }
    let wanted = |v: f64| if positive { v > 0.0 } else { v < 0.0 };
    if (0..n).filter(|&k| wanted(t[(k, k)])).count() != r {
        return None;
    }
    // Bubble the wanted eigenvalues to the leading block.
    let mut placed = 0;
    for k in 0..n {
        if wanted(t[(k, k)]) {
            let mut j = k;
            while j > placed {
                swap_adjacent(&mut t, &mut q, j - 1);
                j -= 1;
            }
            placed += 1;
        }
    }
    let q11 = q.view((0, 0), (r, r)).into_owned();
    let q21 = q.view((r, 0), (r, r)).into_owned();
    // D = Q21 Q11⁻¹  <=>  Q11ᵀ Dᵀ = Q21ᵀ
    let dt = lu_solve(q11.transpose(), &q21.transpose())?;
    let mut d = dt.transpose();
    symmetrize(&mut d);
    Some(d)
}

/// Exchanges the 1×1 diagonal blocks at k and k+1 of the upper-triangular `t`
/// by a Givens rotation, updating the Schur vectors in `q`.
fn swap_adjacent(t: &mut Mat, q: &mut Mat, k: usize) {
    let n = t.nrows();
    let a = t[(k, k)];
    let b = t[(k + 1, k + 1)];
    let (cs, sn) = givens(t[(k, k + 1)], b - a);
    for j in k + 2..n {
        let x = t[(k, j)];
        let y = t[(k + 1, j)];
        t[(k, j)] = cs * x + sn * y;
        t[(k + 1, j)] = cs * y - sn * x;
    }
    for i in 0..k {
        let x = t[(i, k)];
        let y = t[(i, k + 1)];
        t[(i, k)] = cs * x + sn * y;
        t[(i, k + 1)] = cs * y - sn * x;
    }
    t[(k, k)] = b;
    t[(k + 1, k + 1)] = a;
    for i in 0..n {
        let x = q[(i, k)];
        let y = q[(i, k + 1)];
        q[(i, k)] = cs * x + sn * y;
        q[(i, k + 1)] = cs * y - sn * x;
    }
}

fn givens(f: f64, g: f64) -> (f64, f64) {
    if g == 0.0 {
        return (1.0, 0.0);
    }
    let r = libm::hypot(f, g);
    (f / r, g / r)
}

enum Spectral {
    Solved(Mat),
    Unsolvable,
}

// With Ξ = L Lᵀ and N = Lᵀ Λ L, the branch is
// D = Λ/2 + (Λ L) h(N) (Λ L)ᵀ,  h(μ) = −1 / (2 (1 + √(1 + μ))²),
// and it exists iff every eigenvalue of N exceeds −1.
fn spectral(lambda: &Mat, xi: &Mat) -> Spectral {
    let r = lambda.nrows();
    let mut xs = xi.clone();
    symmetrize(&mut xs);
    let e = SymmetricEigen::new(xs);
    let top = e.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: alloc::vec::Vec<usize> = (0..r).filter(|&i| e.eigenvalues[i] > 1e-15 * top).collect();
    let mut d = lambda * 0.5;
    if keep.is_empty() {
        symmetrize(&mut d);
        return Spectral::Solved(d);
    }
    let l = Mat::from_fn(r, keep.len(), |i, j| e.eigenvectors[(i, keep[j])] * libm::sqrt(e.eigenvalues[keep[j]]));
    let ll = lambda * &l;
    let mut nmat = l.tr_mul(&ll);
    symmetrize(&mut nmat);
    let en = SymmetricEigen::new(nmat);
    if en.eigenvalues.iter().any(|&mu| !(mu > -1.0)) {
        return Spectral::Unsolvable;
    }
    let hv = en.eigenvalues.map(|mu| {
        let s = 1.0 + libm::sqrt(1.0 + mu);
        -0.5 / (s * s)
    });
    let p = &ll * &en.eigenvectors;
    let mut ph = p.clone();
    for (j, mut col) in ph.column_iter_mut().enumerate() {
        col *= hv[j];
    }
    d += ph * p.transpose();
    symmetrize(&mut d);
    Spectral::Solved(d)
}
