use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVectorView;

use super::RlrMatrix;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// y = A b with two tree walks; `b` and `y` are in tree order.
pub fn matvec(a: &RlrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let t = &**a.topology();
    let n = t.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    let r = t.rank();
    let m = t.num_nodes();
    let mut y = vec![0.0; n];
    let mut c: Vec<Vector> = vec![Vector::zeros(0); m];
    let mut d: Vec<Vector> = vec![Vector::zeros(0); m];

    for i in t.postorder() {
        if t.is_leaf(i) {
            let rg = t.range(i);
            let bi = DVectorView::from_slice(&b[rg.clone()], rg.len());
            let yi = a.diag(i) * bi;
            y[rg].copy_from_slice(yi.as_slice());
            if t.parent(i).is_some() {
                c[i] = a.v(i).tr_mul(&bi);
            }
        } else if t.parent(i).is_some() {
            let mut s = Vector::zeros(r);
            for &j in t.children(i) {
                s += &c[j];
            }
            c[i] = a.z(i).tr_mul(&s);
        }
    }

    for &i in t.preorder() {
        if t.is_leaf(i) {
            if t.parent(i).is_some() {
                let rg = t.range(i);
                let yi = a.u(i) * &d[i];
                for (dst, v) in y[rg].iter_mut().zip(yi.iter()) {
                    *dst += v;
                }
            }
            continue;
        }
        let ch = t.children(i);
        let mut total = Vector::zeros(r);
        for &j in ch {
            total += &c[j];
        }
        let inherited = t.parent(i).map(|_| a.w(i) * &d[i]);
        let sigma = a.sigma(i);
        for &j in ch {
            let mut dj = sigma * (&total - &c[j]);
            if let Some(h) = &inherited {
                dj += h;
            }
            d[j] = dj;
        }
    }
    Ok(y)
}
