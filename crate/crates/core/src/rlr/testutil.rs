use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{NodeFactors, RlrMatrix, Topology};
use crate::linalg::{symmetrize, Mat};

pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    pub fn mat(&mut self, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| self.next())
    }
}

/// Binary tree over n indices, halving until a node has fewer than 2*leaf.
pub fn topology(n: usize, leaf: usize, rank: usize) -> Arc<Topology> {
    let mut parent = vec![None];
    let mut children: Vec<Vec<usize>> = vec![vec![]];
    let mut ranges = vec![0..n];
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        let rg = ranges[i].clone();
        if rg.len() < 2 * leaf {
            continue;
        }
        let mid = rg.start + rg.len() / 2;
        for part in [rg.start..mid, mid..rg.end] {
            let id = parent.len();
            parent.push(Some(i));
            children.push(vec![]);
            ranges.push(part);
            children[i].push(id);
            stack.push(id);
        }
    }
    Arc::new(Topology::new(rank, parent, children, ranges).unwrap())
}

/// Random factors; `shift` is added to the leaf diagonals.
pub fn random(topo: &Arc<Topology>, sym: bool, seed: u64, shift: f64) -> RlrMatrix {
    let mut g = Lcg(seed);
    let r = topo.rank();
    let nodes = (0..topo.num_nodes())
        .map(|i| {
            let leaf = topo.is_leaf(i);
            let root = topo.parent(i).is_none();
            let ni = topo.size(i);
            let mut f = NodeFactors::default();
            if leaf {
                let b = g.mat(ni, ni);
                let mut d = &b * b.transpose() + Mat::identity(ni, ni) * shift;
                if !sym {
                    d += g.mat(ni, ni) * 0.3;
                }
                f.diag = Some(d);
                if !root {
                    f.u = Some(g.mat(ni, r));
                    if !sym {
                        f.v = Some(g.mat(ni, r));
                    }
                }
            } else {
                let mut s = g.mat(r, r);
                if sym {
                    symmetrize(&mut s);
                }
                f.sigma = Some(s);
                if !root {
                    f.w = Some(g.mat(r, r));
                    if !sym {
                        f.z = Some(g.mat(r, r));
                    }
                }
            }
            f
        })
        .collect();
    RlrMatrix::new(topo.clone(), nodes, sym).unwrap()
}
