//! Dense reference computations, deliberately independent of the fast
//! path: own row-major storage, textbook Cholesky, LU and Jacobi.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::grf::FieldData;
use crate::hcov::HCov;
use crate::kernels::{kernel_eval, KernelSpec};
use crate::linalg::Mat;
use crate::partition::PartitionTree;
use crate::rlr::LogDet;
use crate::sites::{Site, Sites};


/// Largest dimension the oracle accepts.
pub const GUARD: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows > GUARD || cols > GUARD {
            return Err(Error::TooLarge { n: rows.max(cols), limit: GUARD });
        }
        Ok(DenseMatrix { rows, cols, data: vec![0.0; rows * cols] })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = Self::zeros(rows, cols)?;
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        let mut m = Self::zeros(rows, cols)?;
        m.data = data;
        Ok(m)
    }

    pub fn from_mat(m: &Mat) -> Result<Self> {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix { rows: self.cols, cols: self.rows, data: vec![0.0; self.data.len()] };
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, o: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != o.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: o.rows });
        }
        let mut out = DenseMatrix::zeros(self.rows, o.cols)?;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..o.cols {
                    out.data[i * o.cols + j] += a * o.data[k * o.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn sub(&self, o: &DenseMatrix) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn square(a: &DenseMatrix) -> Result<usize> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch { expected: a.rows, found: a.cols });
    }
    Ok(a.rows)
}

/// k_h over arbitrary sites, from pointwise evaluation of one triangle.
pub fn dense_kh_at(h: &HCov, xs: &Sites) -> Result<DenseMatrix> {
    let n = xs.len();
    let mut m = DenseMatrix::zeros(n, n)?;
    for i in 0..n {
        for j in i..n {
            let v = h.kh_eval(xs.point(i), xs.point(j))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// k_h(X, X) in tree order.
pub fn dense_kh(h: &HCov) -> Result<DenseMatrix> {
    dense_kh_at(h, h.tree().sites())
}

/// Unpivoted Cholesky, lower factor.
pub fn dense_chol(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = square(a)?;
    let mut l = DenseMatrix::zeros(n, n)?;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidArgument(format!("matrix is not positive definite (pivot {j})")));
        }
        let d = libm::sqrt(d);
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves L Lᵀ x = b given the lower factor.
pub fn chol_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

struct Lu {
    lu: DenseMatrix,
    piv: Vec<usize>,
    swaps: usize,
}

fn lu(a: &DenseMatrix) -> Result<Lu> {
    let n = square(a)?;
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut swaps = 0;
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if lu[(i, k)].abs() > lu[(p, k)].abs() {
                p = i;
            }
        }
        if lu[(p, k)] == 0.0 || !lu[(p, k)].is_finite() {
            return Err(Error::InvalidArgument(format!("matrix is singular (column {k})")));
        }
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            piv.swap(k, p);
            swaps += 1;
        }
        for i in k + 1..n {
            let f = lu[(i, k)] / lu[(k, k)];
            lu[(i, k)] = f;
            for j in k + 1..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
        }
    }
    Ok(Lu { lu, piv, swaps })
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut y: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.lu[(i, k)] * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.lu[(i, k)] * y[k];
            }
            y[i] /= self.lu[(i, i)];
        }
        y
    }
}

/// A⁻¹ B by LU with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let f = lu(a)?;
    if b.rows != a.rows {
        return Err(Error::DimensionMismatch { expected: a.rows, found: b.rows });
    }
    let mut x = DenseMatrix::zeros(b.rows, b.cols)?;
    let mut col = vec![0.0; b.rows];
    for j in 0..b.cols {
        for i in 0..b.rows {
            col[i] = b[(i, j)];
        }
        for (i, v) in f.solve(&col).into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(x)
}

pub fn dense_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    dense_solve(a, &DenseMatrix::identity(a.rows)?)
}

pub fn dense_logdet(a: &DenseMatrix) -> Result<LogDet> {
    let f = match lu(a) {
        Ok(f) => f,
        Err(_) => return Ok(LogDet::ZERO),
    };
    let mut log_abs = 0.0;
    let mut sign: i8 = if f.swaps % 2 == 0 { 1 } else { -1 };
    for i in 0..a.rows {
        let d = f.lu[(i, i)];
        log_abs += libm::log(d.abs());
        if d < 0.0 {
            sign = -sign;
        }
    }
    Ok(LogDet::new(log_abs, sign))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    let n = square(a)?;
    let mut m = a.clone();
    let scale = m.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if libm::sqrt(off) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Kriging with k_h throughout: mean and latent variance at x0.
pub fn dense_krige(h: &HCov, data: &FieldData, x0: &Site) -> Result<(f64, f64)> {
    let k = dense_kh_at(h, &data.sites)?;
    let l = dense_chol(&k)?;
    let z: Vec<f64> = data.values[0].iter().map(|v| v - data.mean).collect();
    let k0: Vec<f64> = data.sites.iter().map(|x| h.kh_eval(x, x0)).collect::<Result<_>>()?;
    let a = chol_solve(&l, &z);
    let b = chol_solve(&l, &k0);
    let mu = data.mean + k0.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
    let var = h.kernel().sill() - k0.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>();
    Ok((mu, var))
}

/// Gaussian log-likelihood of every replicate column under k_h.
pub fn dense_loglik(h: &HCov, data: &FieldData) -> Result<f64> {
    let k = dense_kh_at(h, &data.sites)?;
    dense_loglik_matrix(&k, data)
}

pub fn dense_loglik_matrix(k: &DenseMatrix, data: &FieldData) -> Result<f64> {
    let l = dense_chol(k)?;
    let n = k.rows as f64;
    let logdet: f64 = 2.0 * (0..k.rows).map(|i| libm::log(l[(i, i)])).sum::<f64>();
    let mut total = 0.0;
    for col in &data.values {
        let z: Vec<f64> = col.iter().map(|v| v - data.mean).collect();
        let a = chol_solve(&l, &z);
        let q: f64 = z.iter().zip(&a).map(|(p, q)| p * q).sum();
        total += -0.5 * q - 0.5 * logdet - 0.5 * n * 1.8378770664093453;
    }
    Ok(total)
}

fn kmat(spec: &KernelSpec, a: &Sites, b: &Sites) -> Result<DenseMatrix> {
    let mut m = DenseMatrix::zeros(a.len(), b.len())?;
    for i in 0..a.len() {
        for j in 0..b.len() {
            m[(i, j)] = kernel_eval(spec, a.point(i), b.point(j))?;
        }
    }
    Ok(m)
}

fn krow(spec: &KernelSpec, x: &Site, b: &Sites) -> Result<DenseMatrix> {
    let mut m = DenseMatrix::zeros(1, b.len())?;
    for j in 0..b.len() {
        m[(0, j)] = kernel_eval(spec, x, b.point(j))?;
    }
    Ok(m)
}

/// The telescoping pieces ξ^(i) of k_h, built from the kernel alone.
pub struct Telescope<'a> {
    spec: KernelSpec,
    tree: &'a PartitionTree,
    // K_i⁻¹ per nonleaf node.
    kinv: Vec<Option<DenseMatrix>>,
    // k(X̲_i, X̲_i) − k(X̲_i, X̲_p) K_p⁻¹ k(X̲_p, X̲_i) per nonleaf, non-root node.
    schur: Vec<Option<DenseMatrix>>,
}

impl<'a> Telescope<'a> {
    pub fn new(spec: &KernelSpec, tree: &'a PartitionTree) -> Result<Self> {
        let m = tree.nodes().len();
        let mut kinv = vec![None; m];
        let mut schur = vec![None; m];
        for i in 0..m {
            if tree.node(i).is_leaf() {
                continue;
            }
            let li = tree.landmarks(i);
            kinv[i] = Some(dense_inverse(&kmat(spec, li, li)?)?);
        }
        for i in 0..m {
            let nd = tree.node(i);
            if let (false, Some(p)) = (nd.is_leaf(), nd.parent) {
                let (li, lp) = (tree.landmarks(i), tree.landmarks(p));
                let cross = kmat(spec, li, lp)?;
                let corr = cross.matmul(kinv[p].as_ref().unwrap())?.matmul(&cross.transpose())?;
                schur[i] = Some(kmat(spec, li, li)?.sub(&corr));
            }
        }
        Ok(Telescope { spec: *spec, tree, kinv, schur })
    }

    // ψ^(i)(x, X̲_i) for x in S_i, following the containment path of x.
    fn psi(&self, i: usize, x: &Site, path: &[usize]) -> Result<DenseMatrix> {
        let k = path.iter().position(|&a| a == i).unwrap();
        let child = path[k - 1];
        let li = self.tree.landmarks(i);
        if self.tree.node(child).is_leaf() {
            return krow(&self.spec, x, li);
        }
        let lc = self.tree.landmarks(child);
        self.psi(child, x, path)?.matmul(self.kinv[child].as_ref().unwrap())?.matmul(&kmat(&self.spec, lc, li)?)
    }

    /// ξ^(i)(x, y).
    pub fn xi(&self, i: usize, x: &Site, y: &Site) -> Result<f64> {
        let px = self.tree.path_to_root(self.tree.locate(x));
        let py = self.tree.path_to_root(self.tree.locate(y));
        if !px.contains(&i) || !py.contains(&i) {
            return Ok(0.0);
        }
        let nd = self.tree.node(i);
        let ev = |a: &Site, b: &Site| kernel_eval(&self.spec, a, b);
        if nd.is_leaf() {
            let Some(p) = nd.parent else { return ev(x, y) };
            let lp = self.tree.landmarks(p);
            let v = krow(&self.spec, x, lp)?
                .matmul(self.kinv[p].as_ref().unwrap())?
                .matmul(&krow(&self.spec, y, lp)?.transpose())?;
            return Ok(ev(x, y)? - v[(0, 0)]);
        }
        let kinv = self.kinv[i].as_ref().unwrap();
        let a = self.psi(i, x, &px)?.matmul(kinv)?;
        let b = self.psi(i, y, &py)?.matmul(kinv)?;
        let mid = match &self.schur[i] {
            Some(s) => s.clone(),
            None => dense_inverse(kinv)?,
        };
        Ok(a.matmul(&mid)?.matmul(&b.transpose())?[(0, 0)])
    }

    /// Σ_i ξ^(i)(x, y).
    pub fn sum(&self, x: &Site, y: &Site) -> Result<f64> {
        let mut s = 0.0;
        for i in 0..self.tree.nodes().len() {
            s += self.xi(i, x, y)?;
        }
        Ok(s)
    }
}
