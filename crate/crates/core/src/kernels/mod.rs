//! Base covariance functions: Matérn, squared-exponential and Matérn on the
//! unit sphere under the chordal metric.

mod bessel;

pub use bessel::BesselK;

use alloc::format;
use core::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::sites::{same_site, Site, Sites};

/// Above this smoothness the Bessel route is refused.
pub const MAX_NU: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Matern,
    SquaredExponential,
    SphereMatern,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Matern => "matern",
            Family::SquaredExponential => "sqexp",
            Family::SphereMatern => "sphere-matern",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s.to_ascii_lowercase().as_str() {
            "matern" => Some(Family::Matern),
            "sqexp" | "squared-exponential" | "squaredexponential" | "gaussian" => Some(Family::SquaredExponential),
            "sphere-matern" | "spherematern" | "sphere" => Some(Family::SphereMatern),
            _ => None,
        }
    }
}

/// `alpha` and `tau` are log10 of the sill and nugget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub alpha: f64,
    pub ell: f64,
    pub nu: f64,
    pub tau: Option<f64>,
}

impl KernelParams {
    pub fn new(alpha: f64, ell: f64, nu: f64, tau: Option<f64>) -> Self {
        KernelParams { alpha, ell, nu, tau }
    }

    pub fn sill(&self) -> f64 {
        libm::pow(10.0, self.alpha)
    }

    pub fn nugget(&self) -> f64 {
        self.tau.map_or(0.0, |t| libm::pow(10.0, t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: Family,
    pub params: KernelParams,
}

impl KernelSpec {
    pub fn new(family: Family, params: KernelParams) -> Result<Self> {
        let s = KernelSpec { family, params };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !p.alpha.is_finite() || !p.ell.is_finite() || !p.nu.is_finite() {
            return Err(Error::InvalidParams(format!("non-finite parameter in {p:?}")));
        }
        if let Some(t) = p.tau {
            if !t.is_finite() {
                return Err(Error::InvalidParams(format!("non-finite tau {t}")));
            }
        }
        if !(p.ell > 0.0) {
            return Err(Error::InvalidParams(format!("ell must be positive, got {}", p.ell)));
        }
        if self.family != Family::SquaredExponential {
            if !(p.nu > 0.0) {
                return Err(Error::InvalidParams(format!("nu must be positive, got {}", p.nu)));
            }
            if p.nu > MAX_NU {
                return Err(Error::BesselOverflow { nu: p.nu });
            }
        }
        if !(p.sill() > 0.0 && p.sill().is_finite()) {
            return Err(Error::InvalidParams(format!("sill 10^{} is not representable", p.alpha)));
        }
        Ok(())
    }

    /// Evaluator with the per-spec constants precomputed.
    pub fn prepare(&self) -> Result<Kernel> {
        self.validate()?;
        let p = &self.params;
        let shape = match self.family {
            Family::SquaredExponential => Shape::SqExp { inv_2l2: 0.5 / (p.ell * p.ell) },
            Family::Matern | Family::SphereMatern if p.nu == 0.5 || p.nu == 1.5 || p.nu == 2.5 => {
                Shape::HalfInt { scale: libm::sqrt(2.0 * p.nu) / p.ell, k: (p.nu - 0.5) as u8 }
            }
            Family::Matern | Family::SphereMatern => {
                let nu = p.nu;
                let ln_c = p.alpha * core::f64::consts::LN_10 - (nu - 1.0) * core::f64::consts::LN_2 - libm::lgamma(nu);
                Shape::Matern { scale: libm::sqrt(2.0 * nu) / p.ell, ln_c, bessel: BesselK::new(nu) }
            }
        };
        Ok(Kernel { family: self.family, sill: p.sill(), nugget: p.nugget(), shape })
    }
}

#[derive(Clone, Debug)]
enum Shape {
    SqExp { inv_2l2: f64 },
    // Matérn with nu = k + 1/2, k <= 2: polynomial times exponential.
    HalfInt { scale: f64, k: u8 },
    Matern { scale: f64, ln_c: f64, bessel: BesselK },
}

/// A validated kernel ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct Kernel {
    family: Family,
    sill: f64,
    nugget: f64,
    shape: Shape,
}

impl Kernel {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn sill(&self) -> f64 {
        self.sill
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Covariance at distance `r`, without the nugget.
    #[inline]
    pub fn of_distance(&self, r: f64) -> f64 {
        match &self.shape {
            Shape::SqExp { inv_2l2 } => self.sill * libm::exp(-r * r * inv_2l2),
            Shape::HalfInt { scale, k } => {
                let t = scale * r;
                let poly = match k {
                    0 => 1.0,
                    1 => 1.0 + t,
                    _ => 1.0 + t + t * t / 3.0,
                };
                self.sill * poly * libm::exp(-t)
            }
            Shape::Matern { scale, ln_c, bessel } => {
                let t = scale * r;
                if t == 0.0 {
                    return self.sill;
                }
                let v = libm::exp(ln_c + bessel.order() * libm::log(t) + bessel.ln_k(t));
                // Tiny t: roundoff in the three logs may push past the limit.
                if v > self.sill {
                    self.sill
                } else {
                    v
                }
            }
        }
    }

    #[inline]
    pub fn distance(&self, x: &Site, y: &Site) -> f64 {
        match self.family {
            Family::SphereMatern => chordal_unchecked(x, y),
            _ => euclidean(x, y),
        }
    }

    /// k(x, y); callers guarantee matching dimensions and valid latitudes.
    #[inline]
    pub fn eval(&self, x: &Site, y: &Site) -> f64 {
        let v = self.of_distance(self.distance(x, y));
        if self.nugget != 0.0 && same_site(x, y) {
            v + self.nugget
        } else {
            v
        }
    }

    /// Gram matrix k(X, Y).
    pub fn matrix(&self, xs: &Sites, ys: &Sites) -> Mat {
        Mat::from_fn(xs.len(), ys.len(), |i, j| self.eval(xs.point(i), ys.point(j)))
    }

    /// Symmetric Gram matrix k(X, X), evaluated on one triangle.
    pub fn gram(&self, xs: &Sites) -> Mat {
        let n = xs.len();
        let mut m = Mat::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = self.eval(xs.point(i), xs.point(j));
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Row vector k(x, X) as a column.
    pub fn column(&self, xs: &Sites, x: &Site) -> crate::linalg::Vector {
        crate::linalg::Vector::from_fn(xs.len(), |i, _| self.eval(xs.point(i), x))
    }
}

#[inline]
fn euclidean(x: &Site, y: &Site) -> f64 {
    libm::sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

#[inline]
fn chordal_unchecked(x: &Site, y: &Site) -> f64 {
    let s1 = libm::sin(0.5 * (x[0] - y[0]));
    let s2 = libm::sin(0.5 * (x[1] - y[1]));
    let h = s1 * s1 + libm::cos(x[0]) * libm::cos(y[0]) * s2 * s2;
    2.0 * libm::sqrt(h.clamp(0.0, 1.0))
}

pub(crate) fn check_latitude(x: &Site) -> Result<()> {
    if x.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: x.len() });
    }
    if !(x[0].abs() <= FRAC_PI_2) {
        return Err(Error::LatitudeOutOfRange(x[0]));
    }
    Ok(())
}

/// Checks that every site is admissible for `family`.
pub fn check_sites(family: Family, xs: &Sites) -> Result<()> {
    if family == Family::SphereMatern {
        for p in xs.iter() {
            check_latitude(p)?;
        }
    }
    Ok(())
}

/// Chordal distance on the unit sphere between (lat, lon) pairs in radians.
pub fn chordal_distance(x: &Site, y: &Site) -> Result<f64> {
    check_latitude(x)?;
    check_latitude(y)?;
    Ok(chordal_unchecked(x, y))
}

pub fn kernel_eval(spec: &KernelSpec, x: &Site, y: &Site) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if spec.family == Family::SphereMatern {
        check_latitude(x)?;
        check_latitude(y)?;
    }
    Ok(spec.prepare()?.eval(x, y))
}

pub fn kernel_matrix(spec: &KernelSpec, xs: &Sites, ys: &Sites) -> Result<Mat> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidArgument("kernel_matrix needs nonempty site lists".into()));
    }
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch { expected: xs.dim(), found: ys.dim() });
    }
    check_sites(spec.family, xs)?;
    check_sites(spec.family, ys)?;
    let k = spec.prepare()?;
    if xs == ys {
        Ok(k.gram(xs))
    } else {
        Ok(k.matrix(xs, ys))
    }
}
