use alloc::format;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::BoundingBox;
use crate::error::{Error, Result};
use crate::sites::Sites;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LandmarkStrategy {
    RegularGrid,
    RandomUniform,
    RandomSubsample,
}

impl LandmarkStrategy {
    pub fn name(self) -> &'static str {
        match self {
            LandmarkStrategy::RegularGrid => "grid",
            LandmarkStrategy::RandomUniform => "uniform",
            LandmarkStrategy::RandomSubsample => "subsample",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid" | "regular" | "regulargrid" | "regular-grid" => Some(LandmarkStrategy::RegularGrid),
            "uniform" | "random" | "randomuniform" | "random-uniform" => Some(LandmarkStrategy::RandomUniform),
            "subsample" | "randomsubsample" | "random-subsample" => Some(LandmarkStrategy::RandomSubsample),
            _ => None,
        }
    }
}

/// Uniform double in [0, 1) from the top 53 bits.
pub(crate) fn unit(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn node_rng(seed: u64, node: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

/// r landmarks inside `bbox`. `node` only labels errors and selects the
/// random stream.
pub fn place_landmarks(
    bbox: &BoundingBox,
    r: usize,
    strategy: LandmarkStrategy,
    seed: u64,
    sites_in_box: &Sites,
    node: usize,
) -> Result<Sites> {
    if r == 0 {
        return Err(Error::InvalidArgument("landmark count must be positive".into()));
    }
    let d = bbox.dim();
    match strategy {
        LandmarkStrategy::RegularGrid => regular_grid(bbox, r, node),
        LandmarkStrategy::RandomUniform => {
            if r > 1 && bbox.volume_dims() == 0 {
                return Err(Error::Landmarks { node, reason: "degenerate box".into() });
            }
            let mut rng = node_rng(seed, node);
            let mut out = Sites::empty(d);
            let mut p = alloc::vec![0.0; d];
            for _ in 0..r {
                for j in 0..d {
                    p[j] = bbox.lo[j] + unit(&mut rng) * (bbox.hi[j] - bbox.lo[j]);
                }
                out.push(&p);
            }
            Ok(out)
        }
        LandmarkStrategy::RandomSubsample => {
            let m = sites_in_box.len();
            if m < r {
                return Err(Error::Landmarks { node, reason: format!("{m} sites in box, {r} landmarks requested") });
            }
            let mut rng = node_rng(seed, node);
            let mut idx: Vec<usize> = (0..m).collect();
            for k in 0..r {
                let j = k + (rng.next_u64() % (m - k) as u64) as usize;
                idx.swap(k, j);
            }
            idx.truncate(r);
            Ok(sites_in_box.select(&idx))
        }
    }
}

/// Lattice with per-dimension counts roughly proportional to the side
/// lengths, points at cell centers, trimmed to the r closest to the center.
fn regular_grid(bbox: &BoundingBox, r: usize, node: usize) -> Result<Sites> {
    let d = bbox.dim();
    let side: Vec<f64> = (0..d).map(|j| bbox.hi[j] - bbox.lo[j]).collect();
    let live: Vec<usize> = (0..d).filter(|&j| side[j] > 0.0).collect();
    let mut m = alloc::vec![1usize; d];
    if live.is_empty() {
        if r > 1 {
            return Err(Error::Landmarks { node, reason: "degenerate box".into() });
        }
    } else {
        let vol: f64 = live.iter().map(|&j| side[j]).product();
        let c0 = libm::pow(r as f64 / vol, 1.0 / live.len() as f64);
        for &j in &live {
            m[j] = (libm::round(c0 * side[j]) as usize).max(1);
        }
        while m.iter().product::<usize>() < r {
            let mut best = live[0];
            for &j in &live[1..] {
                if side[j] / m[j] as f64 > side[best] / m[best] as f64 {
                    best = j;
                }
            }
            m[best] += 1;
        }
    }
    let total: usize = m.iter().product();
    let center: Vec<f64> = (0..d).map(|j| 0.5 * (bbox.lo[j] + bbox.hi[j])).collect();
    let mut pts: Vec<(f64, Vec<f64>)> = Vec::with_capacity(total);
    let mut k = alloc::vec![0usize; d];
    for _ in 0..total {
        let p: Vec<f64> = (0..d).map(|j| bbox.lo[j] + (k[j] as f64 + 0.5) * side[j] / m[j] as f64).collect();
        let dist: f64 = p.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        pts.push((dist, p));
        // Last dimension varies fastest.
        for j in (0..d).rev() {
            k[j] += 1;
            if k[j] < m[j] {
                break;
            }
            k[j] = 0;
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Sites::empty(d);
    for (_, p) in pts.into_iter().take(r) {
        out.push(&p);
    }
    Ok(out)
}
