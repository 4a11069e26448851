use alloc::vec;
use alloc::vec::Vec;

use super::{LogDet, NodeFactors, RlrMatrix};
use crate::error::{Error, Result};
use crate::linalg::{identity, lu_inverse, symmetrize, Mat};

/// Inverse and determinant in one upward and one downward walk.
///
/// Per node the upward walk keeps Π̃ (the Woodbury middle factor) and the
/// downward walk turns it into Σ̃ by adding the corrections of all ancestors.
pub fn invert(a: &RlrMatrix) -> Result<(RlrMatrix, LogDet)> {
    let t = a.topology().clone();
    let r = t.rank();
    let m = t.num_nodes();
    let sym = a.is_symmetric();
    let empty = || Mat::zeros(0, 0);

    let mut out: Vec<NodeFactors> = vec![NodeFactors::default(); m];
    // Θ̃ for every non-root node, Ξ̃ for nonleaves.
    let mut theta: Vec<Mat> = vec![empty(); m];
    let mut det = LogDet::ONE;

    for i in t.postorder() {
        let parent = t.parent(i);
        if t.is_leaf(i) {
            let mut block = a.diag(i).clone();
            if let Some(p) = parent {
                block -= a.u(i) * a.sigma(p) * a.v(i).transpose();
            }
            let (inv, d) = lu_inverse(block).ok_or(Error::SingularBlock { node: i })?;
            det *= d;
            if parent.is_some() {
                let ut = &inv * a.u(i);
                theta[i] = a.v(i).tr_mul(&ut);
                if !sym {
                    out[i].v = Some(inv.tr_mul(a.v(i)));
                }
                out[i].u = Some(ut);
            }
            out[i].diag = Some(inv);
            continue;
        }

        let mut xi = Mat::zeros(r, r);
        for &j in t.children(i) {
            xi += &theta[j];
        }
        let lambda = match parent {
            Some(p) => a.sigma(i) - a.w(i) * a.sigma(p) * a.z(i).transpose(),
            None => a.sigma(i).clone(),
        };
        let (minv, d) = lu_inverse(identity(r) + &lambda * &xi).ok_or(Error::SingularBlock { node: i })?;
        det *= d;
        let mut pi = -(minv * lambda);
        if sym {
            symmetrize(&mut pi);
        }
        if parent.is_some() {
            let wt = (identity(r) + &pi * &xi) * a.w(i);
            theta[i] = a.z(i).tr_mul(&(&xi * &wt));
            if !sym {
                out[i].z = Some((identity(r) + pi.tr_mul(&xi.transpose())) * a.z(i));
            }
            out[i].w = Some(wt);
        }
        out[i].sigma = Some(pi);
    }

    // Downward: Σ̃_i = Π̃_i + W̃_i Σ̃_p Z̃_iᵀ, Ã_ii += Ũ_i Σ̃_p Ṽ_iᵀ.
    for &i in t.preorder() {
        let Some(p) = t.parent(i) else { continue };
        let sigma_p = out[p].sigma.clone().expect("parent coupling");
        let f = &mut out[i];
        if t.is_leaf(i) {
            let u = f.u.as_ref().unwrap();
            let v = f.v.as_ref().unwrap_or(u);
            let corr = u * &sigma_p * v.transpose();
            let diag = f.diag.as_mut().unwrap();
            *diag += corr;
            if sym {
                symmetrize(diag);
            }
        } else {
            let w = f.w.as_ref().unwrap();
            let z = f.z.as_ref().unwrap_or(w);
            let corr = w * &sigma_p * z.transpose();
            let s = f.sigma.as_mut().unwrap();
            *s += corr;
            if sym {
                symmetrize(s);
            }
        }
    }

    Ok((RlrMatrix::from_parts_unchecked(t, out, sym), det))
}
