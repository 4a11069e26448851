use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::hcov::build_hcov;
use crate::kernels::{Family, KernelParams, KernelSpec};
use crate::linalg::{Mat, Vector};
use crate::partition::{build_tree, LandmarkStrategy};
use crate::rlr::testutil::Lcg;

fn points(n: usize, seed: u64) -> Sites {
    let mut g = Lcg(seed.wrapping_mul(0x9e3779b97f4a7c15) ^ 0x77);
    let mut s = Sites::empty(2);
    for _ in 0..n {
        s.push(&[g.next() + 0.5, g.next() + 0.5]);
    }
    s
}

fn matern(nu: f64, tau: Option<f64>) -> KernelSpec {
    KernelSpec::new(Family::Matern, KernelParams::new(0.0, 0.25, nu, tau)).unwrap()
}

fn hcov(xs: &Sites, r: usize, spec: &KernelSpec) -> HCov {
    let tree = build_tree(xs, r, LandmarkStrategy::RandomUniform, 3).unwrap();
    build_hcov(spec, Arc::new(tree)).unwrap()
}

// k_h(X, X) in site order, assembled entry by entry.
fn dense_kh(h: &HCov, xs: &Sites) -> Mat {
    Mat::from_fn(xs.len(), xs.len(), |i, j| h.kh_eval(xs.point(i), xs.point(j)).unwrap())
}

fn dense_loglik(k: &Mat, zs: &[Vec<f64>]) -> f64 {
    let c = k.clone().cholesky().unwrap();
    let logdet = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let n = k.nrows() as f64;
    zs.iter()
        .map(|z| {
            let z = Vector::from_column_slice(z);
            -0.5 * z.dot(&c.solve(&z)) - 0.5 * logdet - 0.5 * n * LN_2PI
        })
        .sum()
}

#[test]
fn sampling_is_deterministic_and_centered() {
    let xs = points(60, 1);
    let h = hcov(&xs, 6, &matern(1.5, Some(-3.0)));
    assert_eq!(sample(&h, 7).unwrap(), sample(&h, 7).unwrap());
    assert_ne!(sample(&h, 7).unwrap(), sample(&h, 8).unwrap());
    let z = sample_with(&h, 2.5, &vec![0.0; 60]).unwrap();
    assert!(z.iter().all(|&v| v == 2.5));
}

#[test]
fn sample_covariance_matches_kh() {
    // Long range, so every entry is far from 0 and the relative tolerance
    // is many standard errors wide.
    let xs = points(8, 2);
    let spec = KernelSpec::new(Family::Matern, KernelParams::new(0.0, 3.0, 0.5, Some(-2.0))).unwrap();
    let h = hcov(&xs, 2, &spec);
    let want = dense_kh(&h, &xs);
    let s = Sampler::new(&h).unwrap();
    let draws = 100_000;
    let mut acc = Mat::zeros(8, 8);
    for seed in 0..draws {
        let z = Vector::from_vec(s.sample(0.0, seed).unwrap());
        acc += &z * z.transpose();
    }
    acc /= draws as f64;
    for i in 0..8 {
        for j in 0..8 {
            assert!(
                (acc[(i, j)] - want[(i, j)]).abs() <= 0.05 * (want[(i, j)].abs() + 0.01),
                "{i} {j}: {} vs {}",
                acc[(i, j)],
                want[(i, j)]
            );
        }
    }
}

#[test]
fn sampled_fields_whiten() {
    let xs = points(48, 3);
    let h = hcov(&xs, 4, &matern(2.5, Some(-2.0)));
    let s = Sampler::new(&h).unwrap();
    let ginv = s.factor().to_dense().unwrap().try_inverse().unwrap();
    let (mut sum, mut sum2, mut count) = (0.0, 0.0, 0.0);
    for seed in 0..10_000u64 {
        let z = s.sample(0.0, seed).unwrap();
        let e = &ginv * Vector::from_vec(h.tree().to_tree_order(&z));
        sum += e.sum();
        sum2 += e.norm_squared();
        count += e.len() as f64;
    }
    let mean = sum / count;
    let var = sum2 / count - mean * mean;
    assert!(mean.abs() <= 4.0 / libm::sqrt(10_000.0));
    assert!((var - 1.0).abs() <= 0.1);
}

#[test]
fn kriging_matches_dense() {
    let xs = points(200, 4);
    let spec = matern(1.5, Some(-2.0));
    let h = hcov(&xs, 10, &spec);
    let z = sample(&h, 11).unwrap();
    let data = FieldData::new(xs.clone(), z.clone()).unwrap().with_mean(0.3);
    let work = krige_prepare(&h, &data).unwrap();
    let k = dense_kh(&h, &xs);
    let c = k.cholesky().unwrap();
    let zc = Vector::from_iterator(200, z.iter().map(|v| v - 0.3));
    let alpha = c.solve(&zc);
    for x0 in points(40, 99).iter() {
        let k0 = Vector::from_fn(200, |i, _| h.kh_eval(xs.point(i), x0).unwrap());
        let mu = 0.3 + k0.dot(&alpha);
        let var = h.kernel().sill() - k0.dot(&c.solve(&k0));
        let got = krige(&h, &work, x0).unwrap();
        assert!((got.mu0 - mu).abs() <= 1e-8 * mu.abs().max(1.0), "{} vs {mu}", got.mu0);
        assert!((got.raw_var0 - var).abs() <= 1e-8 * var.abs().max(1e-2), "{} vs {var}", got.raw_var0);
        assert!(got.raw_var0 >= -1e-10 * spec.params.sill());
    }
    assert_eq!(work.clamped(), 0);
    let site = xs.point(3).to_vec();
    assert!(matches!(work.krige(&site), Err(Error::InSample { index: 3 })));
    let other = hcov(&xs, 10, &spec);
    assert!(krige(&other, &work, &[0.5, 0.5]).is_err());
}

#[test]
fn kriging_interpolates_without_nugget() {
    let xs = points(100, 5);
    let spec = matern(0.5, None);
    let h = hcov(&xs, 8, &spec);
    let z = sample(&h, 2).unwrap();
    let work = krige_prepare(&h, &FieldData::new(xs.clone(), z.clone()).unwrap()).unwrap();
    for i in [0, 17, 63] {
        let x = xs.point(i);
        let x0 = [x[0] + 1e-6 * 0.25, x[1]];
        let r = work.krige(&x0).unwrap();
        assert!((r.mu0 - z[i]).abs() <= 1e-3 * z[i].abs().max(1e-2), "{} vs {}", r.mu0, z[i]);
        assert!(r.var0 <= 1e-3 * h.kernel().sill());
    }
}

#[test]
fn workspaces_are_reproducible() {
    let xs = points(100, 6);
    let h = hcov(&xs, 6, &matern(2.5, Some(-1.5)));
    let data = FieldData::new(xs.clone(), sample(&h, 3).unwrap()).unwrap();
    let a = krige_prepare(&h, &data).unwrap();
    let b = krige_prepare(&h, &data).unwrap();
    let targets = points(1000, 7);
    for (k, x) in targets.iter().enumerate() {
        let ra = a.krige(x).unwrap();
        assert_eq!(ra, b.krige(x).unwrap());
        if k % 100 == 0 {
            let fresh = krige_prepare(&h, &data).unwrap();
            assert_eq!(ra, fresh.krige(x).unwrap());
        }
    }
}

#[test]
fn loglik_single_site() {
    let spec = matern(1.5, Some(-0.5));
    let xs = Sites::new(2, vec![0.3, 0.4]).unwrap();
    let h = hcov(&xs, 1, &spec);
    let data = FieldData::new(xs, vec![1.25]).unwrap().with_mean(1.25);
    let k = 1.0 + libm::pow(10.0, -0.5);
    let want = -0.5 * libm::log(k) - 0.5 * LN_2PI;
    assert!((loglik(&h, &data).unwrap() - want).abs() < 1e-14);
}

#[test]
fn loglik_matches_dense_and_ignores_order() {
    let xs = points(200, 8);
    let spec = matern(1.2, Some(-2.0));
    let h = hcov(&xs, 10, &spec);
    let z = sample(&h, 5).unwrap();
    let data = FieldData::new(xs.clone(), z.clone()).unwrap();
    let l = loglik(&h, &data).unwrap();
    let k = dense_kh(&h, &xs);
    assert!((l - dense_loglik(&k, &[z.clone()])).abs() < 1e-8);

    let mut idx: Vec<usize> = (0..200).collect();
    idx.reverse();
    idx.swap(3, 150);
    let ys = xs.select(&idx);
    let zp: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    let hp = hcov(&ys, 10, &spec);
    let lp = loglik(&hp, &FieldData::new(ys, zp).unwrap()).unwrap();
    assert!((l - lp).abs() < 1e-10, "{l} vs {lp}");

    let wrong = FieldData::new(points(200, 9), z).unwrap();
    assert!(loglik(&h, &wrong).is_err());
}

#[test]
fn replicates() {
    let xs = points(120, 10);
    let h = hcov(&xs, 8, &matern(0.5, Some(-2.0)));
    let s = Sampler::new(&h).unwrap();
    let cols: Vec<Vec<f64>> = (0..3).map(|k| s.sample(0.0, k).unwrap()).collect();
    let one = FieldData::new(xs.clone(), cols[0].clone()).unwrap();
    assert!((loglik_reps(&h, &one).unwrap() - loglik(&h, &one).unwrap()).abs() < 1e-12);

    let three = FieldData::with_replicates(xs.clone(), cols.clone()).unwrap();
    let l3 = loglik_reps(&h, &three).unwrap();
    let k = dense_kh(&h, &xs);
    assert!((l3 - dense_loglik(&k, &cols)).abs() < 1e-8);

    // Quadratic parts double; the determinant parts scale with N.
    let twice = FieldData::with_replicates(xs.clone(), vec![cols[0].clone(), cols[0].clone()]).unwrap();
    let zero = FieldData::new(xs.clone(), vec![0.0; 120]).unwrap();
    let q1 = loglik(&h, &one).unwrap() - loglik(&h, &zero).unwrap();
    let zero2 = FieldData::with_replicates(xs, vec![vec![0.0; 120]; 2]).unwrap();
    let q2 = loglik_reps(&h, &twice).unwrap() - loglik_reps(&h, &zero2).unwrap();
    assert!((q2 - 2.0 * q1).abs() < 1e-9 * q1.abs());
}

#[test]
fn larger_nugget_lowers_the_likelihood() {
    let xs = points(150, 11);
    let mut votes = 0;
    for seed in 0..3 {
        let h0 = hcov(&xs, 8, &matern(1.5, None));
        let z = sample(&h0, seed).unwrap();
        let data = FieldData::new(xs.clone(), z).unwrap();
        let ls: Vec<f64> = [-1.0, -0.5, 0.0, 0.5]
            .iter()
            .map(|&tau| loglik(&hcov(&xs, 8, &matern(1.5, Some(tau))), &data).unwrap())
            .collect();
        if ls.windows(2).all(|w| w[1] < w[0]) {
            votes += 1;
        }
    }
    assert!(votes >= 2);
}

#[test]
fn solve_guard_rejects_a_wrong_inverse() {
    let xs = points(80, 4);
    let h = hcov(&xs, 6, &matern(1.5, Some(-2.0)));
    let z: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
    let (ainv, _) = h.kh().invert().unwrap();
    assert!(checked_solve(&h, &ainv, &z).is_ok());
    let err = checked_solve(&h, h.kh(), &z).unwrap_err();
    assert!(matches!(err, Error::InaccurateSolve { .. }) && err.is_numerical(), "{err:?}");
    assert!(checked_solve(&h, h.kh(), &vec![0.0; 80]).is_ok());
}
