//! The hierarchical covariance k_h and its recursively low-rank Gram matrix.
//!
//! For a site x in leaf l with ancestors p_1, p_2, ... the basis row of x
//! at the child a of p is u_a(x) = k(x, X̲_{p_1}) K_{p_1}⁻¹ W_{p_1} ⋯ W_a,
//! where K_p = k(X̲_p, X̲_p). For x and y whose leaves differ,
//! k_h(x, y) = u_a(x) K_p u_b(y)ᵀ with p the lowest common ancestor and a, b
//! its children on the two paths. Inside a leaf k_h = k.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{check_latitude, Family, Kernel, KernelSpec};
use crate::linalg::{cholesky, Chol, Mat, Vector};
use crate::partition::PartitionTree;
use crate::rlr::{NodeFactors, RlrMatrix};
use crate::sites::Site;


/// Kernel, tree and the Gram matrix K_h = k_h(X, X) bound together.
#[derive(Clone, Debug)]
pub struct HCov {
    spec: KernelSpec,
    kernel: Kernel,
    tree: Arc<PartitionTree>,
    kh: RlrMatrix,
    // Cholesky factor of K_p at every nonleaf p.
    landmark_factors: Vec<Option<Chol>>,
}

pub fn build_hcov(spec: &KernelSpec, tree: Arc<PartitionTree>) -> Result<HCov> {
    let kernel = spec.prepare()?;
    if spec.family == Family::SphereMatern {
        crate::kernels::check_sites(spec.family, tree.sites())?;
    }
    let topo = tree.topology().clone();
    let m = topo.num_nodes();
    let mut landmark_factors: Vec<Option<Chol>> = vec![None; m];
    let mut nodes = vec![NodeFactors::default(); m];
    for i in 0..m {
        if topo.is_leaf(i) {
            continue;
        }
        let g = kernel.gram(tree.landmarks(i));
        nodes[i].sigma = Some(g.clone());
        landmark_factors[i] = Some(cholesky(g).ok_or(Error::LandmarkGram { node: i })?);
    }
    for i in 0..m {
        let parent = topo.parent(i);
        if topo.is_leaf(i) {
            let rg = topo.range(i);
            let xi = tree.sites().slice(rg.start, rg.end);
            nodes[i].diag = Some(kernel.gram(&xi));
            if let Some(p) = parent {
                let cross = kernel.matrix(tree.landmarks(p), &xi);
                let f = landmark_factors[p].as_ref().unwrap();
                nodes[i].u = Some(f.solve(&cross).transpose());
            }
        } else if let Some(p) = parent {
            let cross = kernel.matrix(tree.landmarks(p), tree.landmarks(i));
            let f = landmark_factors[p].as_ref().unwrap();
            nodes[i].w = Some(f.solve(&cross).transpose());
        }
    }
    let kh = RlrMatrix::new(topo, nodes, true)?;
    Ok(HCov { spec: spec.clone(), kernel, tree, kh, landmark_factors })
}

// Basis coefficients of one point along its leaf-to-root path.
pub(crate) struct Path {
    pub leaf: usize,
    /// k(X_leaf, x).
    pub kcol: Vector,
    /// Path nodes from the leaf up to, excluding, the root.
    pub nodes: Vec<usize>,
    /// s[k] = u_{nodes[k]}(x)ᵀ.
    pub s: Vec<Vector>,
}

impl HCov {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn tree(&self) -> &Arc<PartitionTree> {
        &self.tree
    }

    /// K_h as a symmetric recursively low-rank matrix, in tree order.
    pub fn kh(&self) -> &RlrMatrix {
        &self.kh
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    /// Cholesky factor of the landmark Gram at a nonleaf node.
    pub fn landmark_factor(&self, node: usize) -> Option<&Chol> {
        self.landmark_factors[node].as_ref()
    }

    fn check_point(&self, x: &Site) -> Result<()> {
        if x.len() != self.tree.dim() {
            return Err(Error::DimensionMismatch { expected: self.tree.dim(), found: x.len() });
        }
        if self.spec.family == Family::SphereMatern {
            check_latitude(x)?;
        }
        Ok(())
    }

    // u_leaf(x)ᵀ = K_p⁻¹ k(X̲_p, x).
    fn leaf_coeffs(&self, leaf: usize, x: &Site) -> Option<Vector> {
        let p = self.tree.node(leaf).parent?;
        let col = self.kernel.column(self.tree.landmarks(p), x);
        Some(self.landmark_factors[p].as_ref().unwrap().solve(&col))
    }

    /// Coefficients of x up to and including node `stop` on its path.
    fn coeffs_to(&self, leaf: usize, x: &Site, stop: usize) -> Vector {
        let mut s = self.leaf_coeffs(leaf, x).unwrap();
        let mut i = leaf;
        while i != stop {
            i = self.tree.node(i).parent.unwrap();
            s = self.kh.w(i).tr_mul(&s);
        }
        s
    }

    /// k_h(x, y).
    pub fn kh_eval(&self, x: &Site, y: &Site) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        let lx = self.tree.locate(x);
        let ly = self.tree.locate(y);
        if lx == ly {
            return Ok(self.kernel.eval(x, y));
        }
        let px = self.tree.path_to_root(lx);
        let py = self.tree.path_to_root(ly);
        let (mut ix, mut iy) = (px.len() - 1, py.len() - 1);
        while px[ix - 1] == py[iy - 1] {
            ix -= 1;
            iy -= 1;
        }
        let lca = px[ix];
        let sx = self.coeffs_to(lx, x, px[ix - 1]);
        let sy = self.coeffs_to(ly, y, py[iy - 1]);
        Ok(sx.dot(&(self.kh.sigma(lca) * sy)))
    }

    /// Path data for an out-of-sample point.
    pub(crate) fn path(&self, x: &Site) -> Result<Path> {
        self.check_point(x)?;
        if let Some(pos) = self.tree.find_site(x) {
            return Err(Error::InSample { index: self.tree.order()[pos] });
        }
        let leaf = self.tree.locate(x);
        let rg = self.tree.node(leaf).range.clone();
        let xs = self.tree.sites();
        let kcol = Vector::from_fn(rg.len(), |k, _| self.kernel.eval(xs.point(rg.start + k), x));
        let mut nodes = Vec::new();
        let mut s = Vec::new();
        if let Some(mut cur) = self.leaf_coeffs(leaf, x) {
            let mut i = leaf;
            loop {
                nodes.push(i);
                let p = self.tree.node(i).parent.unwrap();
                if self.tree.node(p).parent.is_none() {
                    s.push(cur);
                    break;
                }
                let next = self.kh.w(p).tr_mul(&cur);
                s.push(cur);
                cur = next;
                i = p;
            }
        }
        Ok(Path { leaf, kcol, nodes, s })
    }

    /// The vector k_h(X, x) in tree order, by pointwise evaluation.
    pub fn kh_column(&self, x: &Site) -> Result<Vec<f64>> {
        self.tree.sites().iter().map(|xi| self.kh_eval(xi, x)).collect()
    }
}

/// Weight-dependent half of wᵀ k_h(X, x), computed once per w.
#[derive(Clone, Debug)]
pub struct InnerProdCache<'a> {
    h: &'a HCov,
    w: Vec<f64>,
    // c_a = K_p Σ_{b sibling of a} d_b, per non-root node a.
    c: Vec<Option<Vector>>,
}

pub fn inner_preprocess<'a>(h: &'a HCov, w: &[f64]) -> Result<InnerProdCache<'a>> {
    let n = h.n();
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: w.len() });
    }
    let topo = h.kh.topology();
    let m = topo.num_nodes();
    // d_i = U_iᵀ w_i, carried up through W.
    let mut d: Vec<Option<Vector>> = vec![None; m];
    for i in topo.postorder() {
        if topo.parent(i).is_none() {
            continue;
        }
        d[i] = Some(if topo.is_leaf(i) {
            let rg = topo.range(i);
            h.kh.u(i).tr_mul(&Vector::from_column_slice(&w[rg]))
        } else {
            let mut sum = Vector::zeros(topo.rank());
            for &c in topo.children(i) {
                sum += d[c].as_ref().unwrap();
            }
            h.kh.w(i).tr_mul(&sum)
        });
    }
    let mut c: Vec<Option<Vector>> = vec![None; m];
    for p in 0..m {
        if topo.is_leaf(p) {
            continue;
        }
        let mut total = Vector::zeros(topo.rank());
        for &a in topo.children(p) {
            total += d[a].as_ref().unwrap();
        }
        for &a in topo.children(p) {
            c[a] = Some(h.kh.sigma(p) * (&total - d[a].as_ref().unwrap()));
        }
    }
    Ok(InnerProdCache { h, w: w.to_vec(), c })
}

impl InnerProdCache<'_> {
    pub fn hcov(&self) -> &HCov {
        self.h
    }

    /// wᵀ k_h(X, x) for an unobserved x.
    pub fn oos_inner(&self, x: &Site) -> Result<f64> {
        let path = self.h.path(x)?;
        Ok(self.inner_on(&path))
    }

    pub(crate) fn inner_on(&self, path: &Path) -> f64 {
        let rg = self.h.tree.node(path.leaf).range.clone();
        let mut z: f64 = self.w[rg].iter().zip(path.kcol.iter()).map(|(a, b)| a * b).sum();
        for (k, &a) in path.nodes.iter().enumerate() {
            z += path.s[k].dot(self.c[a].as_ref().unwrap());
        }
        z
    }
}

pub fn oos_inner(cache: &InnerProdCache<'_>, x: &Site) -> Result<f64> {
    cache.oos_inner(x)
}

/// Ã-dependent half of k_h(X, x)ᵀ Ã k_h(X, x), computed once per Ã.
#[derive(Clone, Debug)]
pub struct QuadCache<'a> {
    h: &'a HCov,
    at: Arc<RlrMatrix>,
    /// Θ_i = Ũ_iᵀ U_i, per non-root node.
    pub theta: Vec<Option<Mat>>,
    /// Ξ_i = U_iᵀ Ã_ii U_i, per non-root node.
    pub xi: Vec<Option<Mat>>,
    // Sibling sums folded with K_p:
    // Θ̃_a = Σ_b Θ_b K_p and Ξ̃_a = K_p Σ_b (Ξ_b − Θ_bᵀ Σ̃_p Θ_b) K_p.
    theta_t: Vec<Option<Mat>>,
    xi_t: Vec<Option<Mat>>,
}

pub fn quad_preprocess(h: &HCov, at: Arc<RlrMatrix>) -> Result<QuadCache<'_>> {
    let topo = h.kh.topology();
    if !Arc::ptr_eq(topo, at.topology()) && **topo != **at.topology() {
        return Err(Error::TopologyMismatch);
    }
    if !at.is_symmetric() {
        return Err(Error::InvalidArgument("quadratic forms need a symmetric matrix".into()));
    }
    let m = topo.num_nodes();
    let r = topo.rank();
    let mut theta: Vec<Option<Mat>> = vec![None; m];
    let mut xi: Vec<Option<Mat>> = vec![None; m];
    for i in topo.postorder() {
        if topo.parent(i).is_none() {
            continue;
        }
        if topo.is_leaf(i) {
            let u = h.kh.u(i);
            theta[i] = Some(at.u(i).tr_mul(u));
            xi[i] = Some(u.tr_mul(&(at.diag(i) * u)));
        } else {
            let sig = at.sigma(i);
            let mut s = Mat::zeros(r, r);
            let mut inner = Mat::zeros(r, r);
            for &c in topo.children(i) {
                let th = theta[c].as_ref().unwrap();
                s += th;
                inner += xi[c].as_ref().unwrap();
                inner -= th.tr_mul(&(sig * th));
            }
            inner += s.tr_mul(&(sig * &s));
            let w = h.kh.w(i);
            theta[i] = Some(at.w(i).tr_mul(&(&s * w)));
            let mut x = w.tr_mul(&(inner * w));
            crate::linalg::symmetrize(&mut x);
            xi[i] = Some(x);
        }
    }
    let mut theta_t: Vec<Option<Mat>> = vec![None; m];
    let mut xi_t: Vec<Option<Mat>> = vec![None; m];
    for p in 0..m {
        if topo.is_leaf(p) {
            continue;
        }
        let kp = h.kh.sigma(p);
        let sig = at.sigma(p);
        for &a in topo.children(p) {
            let mut ts = Mat::zeros(r, r);
            let mut xs = Mat::zeros(r, r);
            for &b in topo.children(p) {
                if b == a {
                    continue;
                }
                let th = theta[b].as_ref().unwrap();
                ts += th;
                xs += xi[b].as_ref().unwrap();
                xs -= th.tr_mul(&(sig * th));
            }
            theta_t[a] = Some(ts * kp);
            let mut x = kp * xs * kp;
            crate::linalg::symmetrize(&mut x);
            xi_t[a] = Some(x);
        }
    }
    Ok(QuadCache { h, at, theta, xi, theta_t, xi_t })
}

impl QuadCache<'_> {
    pub fn hcov(&self) -> &HCov {
        self.h
    }

    pub fn matrix(&self) -> &Arc<RlrMatrix> {
        &self.at
    }

    /// k_h(X, x)ᵀ Ã k_h(X, x) for an unobserved x.
    pub fn oos_quad(&self, x: &Site) -> Result<f64> {
        let path = self.h.path(x)?;
        Ok(self.quad_on(&path))
    }

    pub(crate) fn quad_on(&self, path: &Path) -> f64 {
        let topo = self.h.kh.topology();
        let l = path.leaf;
        let v = &path.kcol;
        let mut q = v.dot(&(self.at.diag(l) * v));
        if path.nodes.is_empty() {
            return q;
        }
        let mut proj = self.at.u(l).tr_mul(v);
        for (k, &a) in path.nodes.iter().enumerate() {
            let p = topo.parent(a).unwrap();
            let s = &path.s[k];
            let sig = self.at.sigma(p);
            let t = &proj + self.theta_t[a].as_ref().unwrap() * s;
            q += s.dot(&(self.xi_t[a].as_ref().unwrap() * s)) + t.dot(&(sig * &t)) - proj.dot(&(sig * &proj));
            if topo.parent(p).is_some() {
                proj = self.at.w(p).tr_mul(&t);
            }
        }
        q
    }
}

pub fn oos_quad(cache: &QuadCache<'_>, x: &Site) -> Result<f64> {
    cache.oos_quad(x)
}
