use alloc::vec;
use alloc::vec::Vec;

use super::{RlrMatrix, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Materializes the matrix. Off-diagonal sibling blocks are expanded through
/// the nested bases; symmetric matrices come out exactly symmetric.
pub fn to_dense(a: &RlrMatrix) -> Result<Mat> {
    let t = &**a.topology();
    let n = t.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    let r = t.rank();
    let m = t.num_nodes();
    let sym = a.is_symmetric();
    let mut ub: Vec<Mat> = vec![Mat::zeros(0, 0); m];
    let mut vb: Vec<Mat> = vec![Mat::zeros(0, 0); m];
    for i in t.postorder() {
        if t.parent(i).is_none() {
            continue;
        }
        if t.is_leaf(i) {
            ub[i] = a.u(i).clone();
            if !sym {
                vb[i] = a.v(i).clone();
            }
        } else {
            let base = t.range(i).start;
            let mut u = Mat::zeros(t.size(i), r);
            let mut v = Mat::zeros(if sym { 0 } else { t.size(i) }, r);
            for &c in t.children(i) {
                let off = t.range(c).start - base;
                let rows = t.size(c);
                u.view_mut((off, 0), (rows, r)).copy_from(&(&ub[c] * a.w(i)));
                if !sym {
                    v.view_mut((off, 0), (rows, r)).copy_from(&(&vb[c] * a.z(i)));
                }
            }
            ub[i] = u;
            vb[i] = v;
        }
    }

    let mut out = Mat::zeros(n, n);
    for i in t.leaves() {
        let rg = t.range(i);
        out.view_mut((rg.start, rg.start), (rg.len(), rg.len())).copy_from(a.diag(i));
    }
    for &p in t.preorder() {
        let ch = t.children(p);
        for (x, &i) in ch.iter().enumerate() {
            for (y, &j) in ch.iter().enumerate() {
                if x == y || (sym && y < x) {
                    continue;
                }
                let right = if sym { &ub[j] } else { &vb[j] };
                let block = &ub[i] * a.sigma(p) * right.transpose();
                let (ri, rj) = (t.range(i), t.range(j));
                out.view_mut((ri.start, rj.start), (ri.len(), rj.len())).copy_from(&block);
            }
        }
    }
    if sym {
        for j in 0..n {
            for i in j + 1..n {
                out[(i, j)] = out[(j, i)];
            }
        }
    }
    Ok(out)
}
