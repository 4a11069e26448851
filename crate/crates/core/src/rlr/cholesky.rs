use alloc::vec;
use alloc::vec::Vec;

use super::riccati;
use super::{NodeFactors, RlrMatrix};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, identity, lu_solve, symmetrize, Mat};

/// A = G Gᵀ with G recursively low-rank on the same tree.
///
/// G keeps the bases U_i and W_q of A; the new factors are the leaf blocks
/// G_ii, V_i = C_ii⁻¹ U_i, the couplings Ω_p and the transfers Z_q.
pub fn cholesky_like(a: &RlrMatrix) -> Result<RlrMatrix> {
    if !a.is_symmetric() {
        return Err(Error::InvalidArgument("cholesky_like needs a matrix flagged symmetric".into()));
    }
    let t = a.topology().clone();
    let r = t.rank();
    let m = t.num_nodes();
    let mut out: Vec<NodeFactors> = vec![NodeFactors::default(); m];
    let mut theta: Vec<Mat> = vec![Mat::zeros(0, 0); m];

    for i in t.postorder() {
        let parent = t.parent(i);
        if t.is_leaf(i) {
            let mut block = a.diag(i).clone();
            if let Some(p) = parent {
                block -= a.u(i) * a.sigma(p) * a.u(i).transpose();
                symmetrize(&mut block);
            }
            let c = cholesky(block).ok_or(Error::NotPositiveDefinite { node: i })?;
            if parent.is_some() {
                let mut v = a.u(i).clone();
                if !c.l_dirty().solve_lower_triangular_mut(&mut v) {
                    return Err(Error::NotPositiveDefinite { node: i });
                }
                let mut th = v.tr_mul(&v);
                symmetrize(&mut th);
                theta[i] = th;
                out[i].u = Some(a.u(i).clone());
                out[i].v = Some(v);
            }
            out[i].diag = Some(c.unpack());
            continue;
        }

        let mut xi = Mat::zeros(r, r);
        for &j in t.children(i) {
            xi += &theta[j];
        }
        symmetrize(&mut xi);
        let mut lambda = match parent {
            Some(p) => a.sigma(i) - a.w(i) * a.sigma(p) * a.w(i).transpose(),
            None => a.sigma(i).clone(),
        };
        symmetrize(&mut lambda);
        let d = riccati::riccati_solve(&lambda, &xi).map_err(|_| Error::RiccatiUnsolvable { node: Some(i) })?;
        if parent.is_some() {
            let z = lu_solve(identity(r) + &d * &xi, a.w(i)).ok_or(Error::SingularBlock { node: i })?;
            let mut th = z.tr_mul(&(&xi * &z));
            symmetrize(&mut th);
            theta[i] = th;
            out[i].w = Some(a.w(i).clone());
            out[i].z = Some(z);
        }
        out[i].sigma = Some(d);
    }

    // Ω_i = D_i + W_i Ω_p Z_iᵀ and G_ii = C_ii + U_i Ω_p V_iᵀ.
    for &i in t.preorder() {
        let Some(p) = t.parent(i) else { continue };
        let omega_p = out[p].sigma.clone().expect("parent coupling");
        let f = &mut out[i];
        if t.is_leaf(i) {
            let corr = f.u.as_ref().unwrap() * &omega_p * f.v.as_ref().unwrap().transpose();
            *f.diag.as_mut().unwrap() += corr;
        } else {
            let corr = f.w.as_ref().unwrap() * &omega_p * f.z.as_ref().unwrap().transpose();
            *f.sigma.as_mut().unwrap() += corr;
        }
    }

    Ok(RlrMatrix::from_parts_unchecked(t, out, false))
}
