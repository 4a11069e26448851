//! Modified Bessel function of the second kind for real order.
//!
//! Temme's series for x < 2, Steed's continued fraction otherwise, both at an
//! order |mu| <= 1/2, followed by forward recurrence up to nu. The recurrence
//! is rescaled on the fly so `ln_k` stays finite far past f64 overflow.

use core::f64::consts::PI;

const EPS: f64 = 1e-16;
const MAXIT: usize = 10_000;
const XMIN: f64 = 2.0;
const RESCALE: f64 = 1e250;

// Taylor coefficients of 1/Gamma(z) around 0.
const RGAM: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// K_nu for one fixed order, with the order-only work done up front.
#[derive(Clone, Debug)]
pub struct BesselK {
    nu: f64,
    mu: f64,
    steps: usize,
    gam1: f64,
    gam2: f64,
    gampl: f64,
    gammi: f64,
    fact: f64,
}

impl BesselK {
    pub fn new(nu: f64) -> Self {
        let nu = nu.abs();
        let steps = libm::floor(nu + 0.5) as usize;
        let mu = nu - steps as f64;
        let mut gam1 = 0.0;
        let mut gam2 = 0.0;
        let mut gampl = 0.0;
        let mut gammi = 0.0;
        let mut pw = 1.0;
        // pw = mu^(k-1) for coefficient index k = i + 1.
        for (i, &c) in RGAM.iter().enumerate() {
            let k = i + 1;
            gampl += c * pw;
            gammi += if k % 2 == 1 { c * pw } else { -c * pw };
            if k % 2 == 1 {
                gam2 += c * pw;
            }
            pw *= mu;
        }
        let mut pw = 1.0;
        for k in (2..=26).step_by(2) {
            gam1 -= RGAM[k - 1] * pw;
            pw *= mu * mu;
        }
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / libm::sin(pimu) };
        BesselK { nu, mu, steps, gam1, gam2, gampl, gammi, fact }
    }

    pub fn order(&self) -> f64 {
        self.nu
    }

    /// ln K_nu(x) for x > 0.
    pub fn ln_k(&self, x: f64) -> f64 {
        debug_assert!(x > 0.0);
        let mu = self.mu;
        let xi2 = 2.0 / x;
        let (mut kmu, mut k1, mut lscale);
        if x < XMIN {
            let x2 = 0.5 * x;
            let d = -libm::log(x2);
            let e = mu * d;
            let fact2 = if e.abs() < EPS { 1.0 } else { libm::sinh(e) / e };
            let mut ff = self.fact * (self.gam1 * libm::cosh(e) + self.gam2 * fact2 * d);
            let mut sum = ff;
            let ee = libm::exp(e);
            let mut p = 0.5 * ee / self.gampl;
            let mut q = 0.5 / (ee * self.gammi);
            let mut c = 1.0;
            let dd = x2 * x2;
            let mut sum1 = p;
            for i in 1..MAXIT {
                let fi = i as f64;
                ff = (fi * ff + p + q) / (fi * fi - mu * mu);
                c *= dd / fi;
                p /= fi - mu;
                q /= fi + mu;
                let del = c * ff;
                sum += del;
                sum1 += c * (p - fi * ff);
                if del.abs() < sum.abs() * EPS {
                    break;
                }
            }
            kmu = sum;
            k1 = sum1 * xi2;
            lscale = 0.0;
        } else {
            let mut b = 2.0 * (1.0 + x);
            let mut d = 1.0 / b;
            let mut h = d;
            let mut delh = d;
            let mut q1 = 0.0;
            let mut q2 = 1.0;
            let a1 = 0.25 - mu * mu;
            let mut q = a1;
            let mut c = a1;
            let mut a = -a1;
            let mut s = 1.0 + q * delh;
            for i in 2..MAXIT {
                let fi = i as f64;
                a -= 2.0 * (fi - 1.0);
                c = -a * c / fi;
                let qnew = (q1 - b * q2) / a;
                q1 = q2;
                q2 = qnew;
                q += c * qnew;
                b += 2.0;
                d = 1.0 / (b + a * d);
                delh = (b * d - 1.0) * delh;
                h += delh;
                let dels = q * delh;
                s += dels;
                if (dels / s).abs() < EPS {
                    break;
                }
            }
            h *= a1;
            kmu = 1.0;
            k1 = (mu + x + 0.5 - h) / x;
            lscale = 0.5 * libm::log(PI / (2.0 * x)) - x - libm::log(s);
        }
        for i in 1..=self.steps {
            let next = (mu + i as f64) * xi2 * k1 + kmu;
            kmu = k1;
            k1 = next;
            if k1 > RESCALE {
                lscale += libm::log(k1);
                kmu /= k1;
                k1 = 1.0;
            }
        }
        lscale + libm::log(kmu)
    }

    pub fn eval(&self, x: f64) -> f64 {
        libm::exp(self.ln_k(x))
    }
}
