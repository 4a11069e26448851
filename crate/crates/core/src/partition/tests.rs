use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::rlr::testutil::Lcg;

fn grid(nx: usize, ny: usize) -> Sites {
    let mut s = Sites::empty(2);
    for i in 0..nx {
        for j in 0..ny {
            s.push(&[(i as f64 + 0.5) / nx as f64, (j as f64 + 0.5) / ny as f64]);
        }
    }
    s
}

fn random_sites(n: usize, d: usize, seed: u64) -> Sites {
    let mut g = Lcg(seed.wrapping_mul(0x9e3779b97f4a7c15) ^ 0x2545f4914f6cdd1d);
    let mut s = Sites::empty(d);
    let mut p = vec![0.0; d];
    for _ in 0..n {
        for c in p.iter_mut() {
            *c = g.next() + 0.5;
        }
        s.push(&p);
    }
    s
}

// Plain recursive median split; leaf members in preorder.
fn reference_leaves(xs: &Sites, idx: Vec<usize>, r: usize, out: &mut Vec<Vec<usize>>) {
    if idx.len() < 2 * r {
        let mut v = idx;
        v.sort();
        out.push(v);
        return;
    }
    let d = xs.dim();
    let mut best = 0;
    let mut best_len = f64::NEG_INFINITY;
    for j in 0..d {
        let lo = idx.iter().map(|&i| xs.point(i)[j]).fold(f64::INFINITY, f64::min);
        let hi = idx.iter().map(|&i| xs.point(i)[j]).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > best_len {
            best_len = hi - lo;
            best = j;
        }
    }
    let mut s = idx;
    s.sort_by(|&a, &b| xs.point(a)[best].partial_cmp(&xs.point(b)[best]).unwrap().then(a.cmp(&b)));
    let right = s.split_off(s.len() / 2);
    reference_leaves(xs, s, r, out);
    reference_leaves(xs, right, r, out);
}

#[test]
fn four_r_sites_give_four_leaves_of_r() {
    let r = 4;
    let xs = grid(4, 4);
    let t = build_tree(&xs, r, LandmarkStrategy::RegularGrid, 0).unwrap();
    assert_eq!(t.height(), 2);
    let leaves: Vec<_> = t.nodes().iter().filter(|n| n.is_leaf()).collect();
    assert_eq!(leaves.len(), 4);
    assert!(leaves.iter().all(|l| l.len() == r));
    assert_eq!(t.nodes().len(), 7);
}

#[test]
fn r_sites_give_a_single_leaf() {
    let xs = random_sites(5, 2, 3);
    let t = build_tree(&xs, 5, LandmarkStrategy::RegularGrid, 0).unwrap();
    assert_eq!(t.nodes().len(), 1);
    assert_eq!(t.height(), 0);
    assert!(t.node(0).landmarks.is_none());
}

#[test]
fn matches_reference_median_split() {
    let xs = random_sites(1000, 2, 11);
    let t = build_tree(&xs, 125, LandmarkStrategy::RandomUniform, 1).unwrap();
    assert_eq!(t.height(), 3);
    let mut want = Vec::new();
    reference_leaves(&xs, (0..1000).collect(), 125, &mut want);
    let got: Vec<Vec<usize>> = t
        .nodes()
        .iter()
        .filter(|n| n.is_leaf())
        .map(|n| {
            let mut v: Vec<usize> = n.range.clone().map(|p| t.order()[p]).collect();
            v.sort();
            v
        })
        .collect();
    assert_eq!(got, want);
}

#[test]
fn too_few_sites_is_an_error() {
    let xs = random_sites(3, 2, 1);
    assert!(matches!(build_tree(&xs, 4, LandmarkStrategy::RegularGrid, 0), Err(Error::TooFewSites { n: 3, rank: 4 })));
}

#[test]
fn duplicates_are_reported() {
    let mut xs = random_sites(10, 2, 1);
    let p = xs.point(2).to_vec();
    xs.push(&p);
    assert!(matches!(
        build_tree(&xs, 2, LandmarkStrategy::RegularGrid, 0),
        Err(Error::DuplicateSite { first: 2, second: 10 })
    ));
}

#[test]
fn grid_landmarks_examples() {
    let unit = BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let none = Sites::empty(2);
    let lm = place_landmarks(&unit, 4, LandmarkStrategy::RegularGrid, 0, &none, 0).unwrap();
    let mut pts: Vec<Vec<f64>> = lm.iter().map(|p| p.to_vec()).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(pts, vec![vec![0.25, 0.25], vec![0.25, 0.75], vec![0.75, 0.25], vec![0.75, 0.75]]);

    let lm = place_landmarks(&unit, 1, LandmarkStrategy::RegularGrid, 0, &none, 0).unwrap();
    assert_eq!(lm.point(0), &[0.5, 0.5]);

    let wide = BoundingBox::new(vec![0.0, 0.0], vec![3.0, 2.0]).unwrap();
    let lm = place_landmarks(&wide, 5, LandmarkStrategy::RegularGrid, 0, &none, 0).unwrap();
    assert_eq!(lm.len(), 5);
    for p in lm.iter() {
        let xi = p[0] - 0.5;
        let yi = p[1] - 0.5;
        assert!(xi.fract() == 0.0 && (0.0..3.0).contains(&xi));
        assert!(yi.fract() == 0.0 && (0.0..2.0).contains(&yi));
    }
}

#[test]
fn subsample_needs_enough_sites() {
    let b = BoundingBox::new(vec![0.0], vec![1.0]).unwrap();
    let xs = Sites::new(1, vec![0.1, 0.2]).unwrap();
    let err = place_landmarks(&b, 3, LandmarkStrategy::RandomSubsample, 0, &xs, 7).unwrap_err();
    assert!(matches!(err, Error::Landmarks { node: 7, .. }));
    let lm = place_landmarks(&b, 2, LandmarkStrategy::RandomSubsample, 0, &xs, 7).unwrap();
    let mut v: Vec<f64> = lm.iter().map(|p| p[0]).collect();
    v.sort_by(f64::total_cmp);
    assert_eq!(v, vec![0.1, 0.2]);
}

#[test]
fn landmarks_avoid_sites() {
    // The 2x2 grid landmarks of the root land on sites of this 4x4 grid.
    let mut xs = grid(4, 4);
    xs.push(&[0.25, 0.25]);
    xs.push(&[0.75, 0.75]);
    let t = build_tree(&xs, 4, LandmarkStrategy::RegularGrid, 0).unwrap();
    for nd in t.nodes() {
        if let Some(lm) = &nd.landmarks {
            for p in lm.iter() {
                assert!(t.find_site(p).is_none());
                assert!(nd.bbox.contains(p));
            }
        }
    }
}

#[test]
fn landmarks_keep_clear_of_gridded_sites() {
    // Half of a 40x50 grid: cell-centered landmarks of some boxes fall
    // within rounding of a site unless they are moved.
    let mut full = Sites::empty(2);
    for i in 0..40 {
        for j in 0..50 {
            full.push(&[-0.8 + 1.6 * i as f64 / 39.0, -1.0 + 2.0 * j as f64 / 49.0]);
        }
    }
    for seed in 0..6 {
        let mut g = Lcg(seed + 11);
        let mut idx: Vec<usize> = (0..2000).collect();
        for k in 0..1000 {
            let j = k + ((g.next() + 0.5) * (2000 - k) as f64) as usize;
            idx.swap(k, j.min(1999));
        }
        idx.truncate(1000);
        let t = build_tree(&full.select(&idx), 125, LandmarkStrategy::RegularGrid, 0).unwrap();
        for nd in t.nodes() {
            let Some(lm) = &nd.landmarks else { continue };
            for p in lm.iter() {
                assert!(nd.bbox.contains(p));
                for pos in nd.range.clone() {
                    let x = t.sites().point(pos);
                    let d = libm::sqrt((x[0] - p[0]) * (x[0] - p[0]) + (x[1] - p[1]) * (x[1] - p[1]));
                    assert!(d > 1e-4, "seed {seed} node {}: landmark {p:?} at {d:e} from a site", nd.id);
                }
            }
        }
    }
}

#[test]
fn locate_finds_sites_and_new_points() {
    let xs = random_sites(300, 2, 5);
    let t = build_tree(&xs, 10, LandmarkStrategy::RandomUniform, 2).unwrap();
    for pos in 0..t.n() {
        assert_eq!(t.locate(t.sites().point(pos)), t.leaf_of_position(pos));
    }
    let far = t.locate(&[5.0, 5.0]);
    assert!(t.node(far).is_leaf());
    let path = t.path_to_root(far);
    assert_eq!(*path.last().unwrap(), 0);
}

#[test]
fn text_round_trip() {
    for strategy in [LandmarkStrategy::RegularGrid, LandmarkStrategy::RandomUniform, LandmarkStrategy::RandomSubsample]
    {
        let xs = random_sites(200, 3, 9);
        let t = build_tree(&xs, 7, strategy, 4).unwrap();
        let s = write_tree(&t);
        let back = read_tree(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(write_tree(&back), s);
    }
}

#[test]
fn text_rejects_garbage() {
    let xs = random_sites(40, 2, 9);
    let t = build_tree(&xs, 4, LandmarkStrategy::RegularGrid, 4).unwrap();
    let s = write_tree(&t);
    assert!(read_tree("hello").is_err());
    let cut: String = s.lines().take(30).map(|l| alloc::format!("{l}\n")).collect();
    assert!(read_tree(&cut).is_err());
    let swapped = s.replacen("site 0 ", "site 1 ", 1);
    assert!(read_tree(&swapped).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn structure_invariants(n in 2usize..300, d in 1usize..4, r in 1usize..12, seed in 0u64..1000) {
        prop_assume!(n >= r);
        let xs = random_sites(n, d, seed);
        let strategy = match seed % 3 {
            0 => LandmarkStrategy::RegularGrid,
            1 => LandmarkStrategy::RandomUniform,
            _ => LandmarkStrategy::RandomSubsample,
        };
        let t = build_tree(&xs, r, strategy, seed).unwrap();

        // perm and order are inverse bijections and sites follow them.
        for i in 0..n {
            prop_assert_eq!(t.order()[t.perm()[i]], i);
            prop_assert_eq!(t.sites().point(t.perm()[i]), xs.point(i));
        }
        let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        prop_assert_eq!(t.to_original_order(&t.to_tree_order(&v)), v);

        for nd in t.nodes() {
            if let Some(p) = nd.parent {
                prop_assert!(t.node(p).bbox.contains_box(&nd.bbox));
            }
            if nd.is_leaf() {
                prop_assert!(nd.len() < 2 * r || nd.len() < 2);
                prop_assert!(nd.landmarks.is_none());
                for pos in nd.range.clone() {
                    prop_assert!(nd.bbox.contains(t.sites().point(pos)));
                }
            } else {
                let lm = nd.landmarks.as_ref().unwrap();
                prop_assert_eq!(lm.len(), r);
                for p in lm.iter() {
                    prop_assert!(nd.bbox.contains(p));
                }
                let (a, b) = (&t.node(nd.children[0]), &t.node(nd.children[1]));
                prop_assert_eq!(a.len(), nd.len() / 2);
                prop_assert!(a.len() >= r && b.len() >= r);
            }
        }

        let again = build_tree(&xs, r, strategy, seed).unwrap();
        prop_assert_eq!(write_tree(&again), write_tree(&t));
    }
}
