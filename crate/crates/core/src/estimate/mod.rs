//! Maximum likelihood over the kernel parameters: Nelder–Mead in a
//! bound-transformed space, finite-difference standard errors, and
//! likelihood cross sections.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grf::{loglik, loglik_reps, FieldData};
use crate::hcov::build_hcov;
use crate::kernels::{Family, KernelParams, KernelSpec};
use crate::linalg::{cholesky, Mat};
use crate::partition::PartitionTree;

mod nelder_mead;

pub use nelder_mead::{minimize, Minimum};


#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    Alpha,
    Ell,
    Nu,
    Tau,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Alpha, Param::Ell, Param::Nu, Param::Tau];

    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::Ell => "ell",
            Param::Nu => "nu",
            Param::Tau => "tau",
        }
    }

    pub fn parse(s: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn get(self, p: &KernelParams) -> f64 {
        match self {
            Param::Alpha => p.alpha,
            Param::Ell => p.ell,
            Param::Nu => p.nu,
            Param::Tau => p.tau.unwrap_or(f64::NEG_INFINITY),
        }
    }

    pub fn set(self, p: &mut KernelParams, v: f64) {
        match self {
            Param::Alpha => p.alpha = v,
            Param::Ell => p.ell = v,
            Param::Nu => p.nu = v,
            Param::Tau => p.tau = Some(v),
        }
    }
}

/// Free parameters with their bounds; everything else comes from the
/// point the search starts at.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpace {
    pub free: Vec<(Param, f64, f64)>,
}

impl ParamSpace {
    pub fn new(free: Vec<(Param, f64, f64)>) -> Result<Self> {
        for (k, &(p, lo, hi)) in free.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "bounds for {} must be finite with lower < upper",
                    p.name()
                )));
            }
            if p == Param::Ell && lo <= 0.0 {
                return Err(Error::InvalidArgument("ell bounds must be positive".into()));
            }
            if p == Param::Nu && lo <= 0.0 {
                return Err(Error::InvalidArgument("nu bounds must be positive".into()));
            }
            if free[..k].iter().any(|q| q.0 == p) {
                return Err(Error::InvalidArgument(format!("{} listed twice", p.name())));
            }
        }
        Ok(ParamSpace { free })
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn contains(&self, theta: &KernelParams) -> bool {
        self.free.iter().all(|&(p, lo, hi)| {
            let v = p.get(theta);
            lo <= v && v <= hi
        })
    }

    pub fn values(&self, theta: &KernelParams) -> Vec<f64> {
        self.free.iter().map(|&(p, _, _)| p.get(theta)).collect()
    }

    pub fn with_values(&self, base: &KernelParams, v: &[f64]) -> KernelParams {
        let mut out = *base;
        for (&(p, _, _), &x) in self.free.iter().zip(v) {
            p.set(&mut out, x);
        }
        out
    }

    /// Unconstrained coordinates: logit of the position inside the bounds.
    pub fn to_unbounded(&self, theta: &KernelParams) -> Vec<f64> {
        self.free
            .iter()
            .map(|&(p, lo, hi)| {
                let t = ((p.get(theta) - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
                libm::log(t / (1.0 - t))
            })
            .collect()
    }

    pub fn from_unbounded(&self, base: &KernelParams, u: &[f64]) -> KernelParams {
        let v: Vec<f64> =
            self.free.iter().zip(u).map(|(&(_, lo, hi), &x)| lo + (hi - lo) / (1.0 + libm::exp(-x))).collect();
        self.with_values(base, &v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Evaluation budget per Nelder–Mead run.
    pub max_evals: usize,
    /// Initial simplex edge in unconstrained units.
    pub initial_step: f64,
    /// Simplex diameter tolerance in unconstrained units.
    pub xtol: f64,
    /// Spread of L across the simplex, relative to max(1, |L|).
    pub ftol: f64,
    /// Run a second search from the first optimum.
    pub restart: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_evals: 1000, initial_step: 0.5, xtol: 1e-4, ftol: 1e-6, restart: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub theta_hat: KernelParams,
    pub loglik_at_opt: f64,
    /// Filled by [`std_errors`]; empty until then.
    pub std_errors: Vec<f64>,
    /// Every successful evaluation in order.
    pub trace: Vec<(KernelParams, f64)>,
    pub converged: bool,
    /// Optimum of the first run, before the restart.
    pub first_run: KernelParams,
}

/// Maximizes `f` over `space`, starting from `init`.
pub fn maximize<F>(mut f: F, space: &ParamSpace, init: &KernelParams, opts: &FitOptions) -> Result<FitResult>
where
    F: FnMut(&KernelParams) -> Result<f64>,
{
    if !space.contains(init) {
        return Err(Error::InvalidArgument("initial point lies outside the bounds".into()));
    }
    let l0 = f(init).map_err(|e| Error::BadInitialPoint(format!("{e}")))?;
    if !l0.is_finite() {
        return Err(Error::BadInitialPoint(format!("log-likelihood is {l0}")));
    }
    let mut trace = vec![(*init, l0)];
    if space.dim() == 0 {
        return Ok(FitResult {
            theta_hat: *init,
            loglik_at_opt: l0,
            std_errors: Vec::new(),
            trace,
            converged: true,
            first_run: *init,
        });
    }
    let mut run = |start: &KernelParams, trace: &mut Vec<(KernelParams, f64)>| {
        let mut obj = |u: &[f64]| {
            let th = space.from_unbounded(start, u);
            match f(&th) {
                Ok(l) if l.is_finite() => {
                    trace.push((th, l));
                    -l
                }
                _ => f64::INFINITY,
            }
        };
        minimize(&mut obj, &space.to_unbounded(start), opts.initial_step, opts.xtol, opts.ftol, opts.max_evals)
    };
    let first = run(init, &mut trace);
    let first_theta = space.from_unbounded(init, &first.x);
    let mut best = (first_theta, -first.value);
    let mut converged = first.converged;
    if opts.restart {
        let second = run(&first_theta, &mut trace);
        converged = second.converged;
        if -second.value > best.1 {
            best = (space.from_unbounded(&first_theta, &second.x), -second.value);
        }
    }
    if l0 > best.1 {
        best = (*init, l0);
    }
    Ok(FitResult {
        theta_hat: best.0,
        loglik_at_opt: best.1,
        std_errors: Vec::new(),
        trace,
        converged,
        first_run: first_theta,
    })
}

/// log-likelihood of `data` under k_h built on `tree` with parameters θ.
pub fn loglik_at(data: &FieldData, family: Family, tree: &Arc<PartitionTree>, theta: &KernelParams) -> Result<f64> {
    let spec = KernelSpec::new(family, *theta)?;
    let h = build_hcov(&spec, tree.clone())?;
    if data.replicates() > 1 {
        loglik_reps(&h, data)
    } else {
        loglik(&h, data)
    }
}

/// Maximum likelihood with standard errors at the optimum. A failing
/// Hessian leaves `std_errors` empty rather than discarding the fit.
pub fn fit_mle(
    data: &FieldData,
    family: Family,
    tree: &Arc<PartitionTree>,
    space: &ParamSpace,
    init: &KernelParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut fit = maximize(|th| loglik_at(data, family, tree, th), space, init, opts)?;
    if let Ok(se) = std_errors(data, family, tree, space, &fit.theta_hat) {
        fit.std_errors = se;
    }
    Ok(fit)
}

/// One fit per fixed ν, the others free.
pub fn fit_nu_sweep(
    data: &FieldData,
    family: Family,
    tree: &Arc<PartitionTree>,
    space: &ParamSpace,
    init: &KernelParams,
    nus: &[f64],
    opts: &FitOptions,
) -> Vec<(f64, Result<FitResult>)> {
    let fixed = ParamSpace { free: space.free.iter().copied().filter(|q| q.0 != Param::Nu).collect() };
    nus.iter()
        .map(|&nu| {
            let mut start = *init;
            start.nu = nu;
            (nu, fit_mle(data, family, tree, &fixed, &start, opts))
        })
        .collect()
}

pub fn std_errors(
    data: &FieldData,
    family: Family,
    tree: &Arc<PartitionTree>,
    space: &ParamSpace,
    theta_hat: &KernelParams,
) -> Result<Vec<f64>> {
    std_errors_with(|th| loglik_at(data, family, tree, th), space, theta_hat)
}

/// Standard errors from the central-difference Hessian of `f`.
pub fn std_errors_with<F>(mut f: F, space: &ParamSpace, theta: &KernelParams) -> Result<Vec<f64>>
where
    F: FnMut(&KernelParams) -> Result<f64>,
{
    let h = hessian(&mut f, space, theta)?;
    let m = space.dim();
    let neg = -h;
    let c = cholesky(neg).ok_or(Error::IndefiniteHessian)?;
    let cov = c.inverse();
    Ok((0..m).map(|j| libm::sqrt(cov[(j, j)])).collect())
}

/// Symmetrized central-difference Hessian with step 1e-3 (1 + |θ_j|).
pub fn hessian<F>(f: &mut F, space: &ParamSpace, theta: &KernelParams) -> Result<Mat>
where
    F: FnMut(&KernelParams) -> Result<f64>,
{
    let m = space.dim();
    let x0 = space.values(theta);
    let step: Vec<f64> = x0.iter().map(|v| 1e-3 * (1.0 + v.abs())).collect();
    let mut at = |d: &[(usize, f64)]| {
        let mut x = x0.clone();
        for &(j, s) in d {
            x[j] += s * step[j];
        }
        f(&space.with_values(theta, &x))
    };
    let f0 = at(&[])?;
    let mut h = Mat::zeros(m, m);
    for i in 0..m {
        let fp = at(&[(i, 1.0)])?;
        let fm = at(&[(i, -1.0)])?;
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
        for j in 0..i {
            let pp = at(&[(i, 1.0), (j, 1.0)])?;
            let pm = at(&[(i, 1.0), (j, -1.0)])?;
            let mp = at(&[(i, -1.0), (j, 1.0)])?;
            let mm = at(&[(i, -1.0), (j, -1.0)])?;
            let v = (pp - pm - mp + mm) / (4.0 * step[i] * step[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// L on the grid `xs` × `ys` of two parameters, the rest held at `center`.
/// Row k holds `xs[k]`. Failed evaluations are NaN.
pub fn loglik_slice(
    data: &FieldData,
    family: Family,
    tree: &Arc<PartitionTree>,
    center: &KernelParams,
    axes: (Param, Param),
    xs: &[f64],
    ys: &[f64],
) -> Result<Vec<Vec<f64>>> {
    slice_with(|th| loglik_at(data, family, tree, th), center, axes, xs, ys)
}

pub fn slice_with<F>(
    mut f: F,
    center: &KernelParams,
    axes: (Param, Param),
    xs: &[f64],
    ys: &[f64],
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&KernelParams) -> Result<f64>,
{
    if axes.0 == axes.1 {
        return Err(Error::InvalidArgument("slice axes must differ".into()));
    }
    Ok(xs
        .iter()
        .map(|&a| {
            ys.iter()
                .map(|&b| {
                    let mut th = *center;
                    axes.0.set(&mut th, a);
                    axes.1.set(&mut th, b);
                    f(&th).unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect())
}

/// `count` evenly spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
    }
}

pub fn describe(theta: &KernelParams) -> String {
    match theta.tau {
        Some(t) => format!("alpha={} ell={} nu={} tau={}", theta.alpha, theta.ell, theta.nu, t),
        None => format!("alpha={} ell={} nu={}", theta.alpha, theta.ell, theta.nu),
    }
}
