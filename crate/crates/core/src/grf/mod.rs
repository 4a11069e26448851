//! Sampling, kriging and likelihoods for a zero-mean-plus-constant Gaussian
//! field with covariance k_h.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::hcov::{inner_preprocess, quad_preprocess, HCov, InnerProdCache, QuadCache};
use crate::normal::NormalStream;
use crate::rlr::RlrMatrix;
use crate::sites::{same_site, Site, Sites};

#[cfg(test)]
mod tests;

const LN_2PI: f64 = 1.8378770664093453;

/// Observations at the sites, in the caller's site order.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData {
    pub sites: Sites,
    /// One column per replicate, each of length n.
    pub values: Vec<Vec<f64>>,
    pub mean: f64,
}

impl FieldData {
    pub fn new(sites: Sites, values: Vec<f64>) -> Result<Self> {
        Self::with_replicates(sites, alloc::vec![values])
    }

    pub fn with_replicates(sites: Sites, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("no value columns".into()));
        }
        for col in &values {
            if col.len() != sites.len() {
                return Err(Error::DimensionMismatch { expected: sites.len(), found: col.len() });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("values must be finite".into()));
            }
        }
        Ok(FieldData { sites, values, mean: 0.0 })
    }

    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn replicates(&self) -> usize {
        self.values.len()
    }
}

fn check_sites(h: &HCov, data: &FieldData) -> Result<()> {
    let t = h.tree();
    if data.n() != t.n() {
        return Err(Error::DimensionMismatch { expected: t.n(), found: data.n() });
    }
    if data.sites.dim() != t.dim() {
        return Err(Error::DimensionMismatch { expected: t.dim(), found: data.sites.dim() });
    }
    for (i, x) in data.sites.iter().enumerate() {
        if !same_site(x, t.sites().point(t.perm()[i])) {
            return Err(Error::InvalidArgument("data sites differ from the tree's sites".into()));
        }
    }
    Ok(())
}

// z − μ for one replicate, in tree order.
fn centered(h: &HCov, data: &FieldData, rep: usize) -> Vec<f64> {
    let z = h.tree().to_tree_order(&data.values[rep]);
    z.into_iter().map(|v| v - data.mean).collect()
}

/// The factor G of K_h = G Gᵀ, reusable for many draws.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    h: &'a HCov,
    g: RlrMatrix,
}

impl<'a> Sampler<'a> {
    pub fn new(h: &'a HCov) -> Result<Self> {
        Ok(Sampler { h, g: h.kh().cholesky_like()? })
    }

    /// Reuses a factor computed earlier for the same tree.
    pub fn from_factor(h: &'a HCov, g: RlrMatrix) -> Result<Self> {
        if g.topology() != h.kh().topology() {
            return Err(Error::TopologyMismatch);
        }
        Ok(Sampler { h, g })
    }

    pub fn factor(&self) -> &RlrMatrix {
        &self.g
    }

    /// μ + G y for a given tree-ordered y; the result is in site order.
    pub fn sample_with(&self, mean: f64, y: &[f64]) -> Result<Vec<f64>> {
        let z = self.g.matvec(y)?;
        Ok(self.h.tree().to_original_order(&z).into_iter().map(|v| v + mean).collect())
    }

    pub fn sample(&self, mean: f64, seed: u64) -> Result<Vec<f64>> {
        let mut y = alloc::vec![0.0; self.h.n()];
        NormalStream::new(seed).fill(&mut y);
        self.sample_with(mean, &y)
    }
}

/// One zero-mean draw with covariance K_h, in site order.
pub fn sample(h: &HCov, seed: u64) -> Result<Vec<f64>> {
    Sampler::new(h)?.sample(0.0, seed)
}

/// Draw with an explicit standard-normal vector y (tree order).
pub fn sample_with(h: &HCov, mean: f64, y: &[f64]) -> Result<Vec<f64>> {
    Sampler::new(h)?.sample_with(mean, y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrigeResult {
    pub mu0: f64,
    /// Predictive variance of the latent field, clamped at 0.
    pub var0: f64,
    /// Value before clamping.
    pub raw_var0: f64,
}

/// K_h⁻¹ and the two out-of-sample caches built from it.
#[derive(Debug)]
pub struct KrigeWorkspace<'a> {
    h: &'a HCov,
    mean: f64,
    inner: InnerProdCache<'a>,
    quad: QuadCache<'a>,
    clamped: AtomicUsize,
}

pub fn krige_prepare<'a>(h: &'a HCov, data: &FieldData) -> Result<KrigeWorkspace<'a>> {
    check_sites(h, data)?;
    let (ainv, _) = h.kh().invert()?;
    let w = checked_solve(h, &ainv, &centered(h, data, 0))?;
    let inner = inner_preprocess(h, &w)?;
    let quad = quad_preprocess(h, Arc::new(ainv))?;
    Ok(KrigeWorkspace { h, mean: data.mean, inner, quad, clamped: AtomicUsize::new(0) })
}

impl KrigeWorkspace<'_> {
    /// Predicts the latent field at an unobserved x0.
    pub fn krige(&self, x0: &Site) -> Result<KrigeResult> {
        let path = self.h.path(x0)?;
        let mu0 = self.mean + self.inner.inner_on(&path);
        let raw = self.h.kernel().sill() - self.quad.quad_on(&path);
        let var0 = if raw < 0.0 {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            0.0
        } else {
            raw
        };
        Ok(KrigeResult { mu0, var0, raw_var0: raw })
    }

    pub fn krige_all(&self, xs: &Sites) -> Result<Vec<KrigeResult>> {
        xs.iter().map(|x| self.krige(x)).collect()
    }

    /// Number of predictions whose variance was clamped to 0.
    pub fn clamped(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    pub fn hcov(&self) -> &HCov {
        self.h
    }
}

pub fn krige(h: &HCov, work: &KrigeWorkspace<'_>, x0: &Site) -> Result<KrigeResult> {
    if !core::ptr::eq(h, work.h) {
        return Err(Error::InvalidArgument("workspace was prepared for a different covariance".into()));
    }
    work.krige(x0)
}

/// Gaussian log-likelihood of the first value column.
pub fn loglik(h: &HCov, data: &FieldData) -> Result<f64> {
    check_sites(h, data)?;
    let (ainv, det) = h.kh().invert()?;
    let z = centered(h, data, 0);
    finish(h, &ainv, det, &[z])
}

/// Log-likelihood of all replicate columns, which share one inversion.
pub fn loglik_reps(h: &HCov, data: &FieldData) -> Result<f64> {
    check_sites(h, data)?;
    let (ainv, det) = h.kh().invert()?;
    let zs: Vec<Vec<f64>> = (0..data.replicates()).map(|k| centered(h, data, k)).collect();
    finish(h, &ainv, det, &zs)
}

/// Residual bound for K_h w = z. Sound inversions sit near 1e-7 even on
/// tightly packed sites; a broken one is off by orders of magnitude.
const SOLVE_TOL: f64 = 1e-4;

fn checked_solve(h: &HCov, ainv: &RlrMatrix, z: &[f64]) -> Result<Vec<f64>> {
    let w = ainv.matvec(z)?;
    let back = h.kh().matvec(&w)?;
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let res = back.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if norm > 0.0 && !(res <= SOLVE_TOL * norm) {
        return Err(Error::InaccurateSolve { residual: res / norm });
    }
    Ok(w)
}

fn finish(h: &HCov, ainv: &RlrMatrix, det: crate::rlr::LogDet, zs: &[Vec<f64>]) -> Result<f64> {
    if det.sign != 1 {
        return Err(Error::NonPositiveDeterminant { sign: det.sign });
    }
    let n = ainv.n() as f64;
    let reps = zs.len() as f64;
    let mut quad = 0.0;
    for z in zs {
        let w = checked_solve(h, ainv, z)?;
        quad += z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(-0.5 * quad - 0.5 * reps * det.log_abs - 0.5 * reps * n * LN_2PI)
}
