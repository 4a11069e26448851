//! k-d style partitioning of the sites and landmark placement.
//!
//! Nodes are numbered in preorder with the root at 0. Each split cuts the
//! longest side of the node's box at the median site, the left child taking
//! ⌊m/2⌋ sites; splitting stops once a node holds fewer than 2r sites.

mod landmarks;
mod text;

pub use landmarks::{place_landmarks, LandmarkStrategy};
pub use text::{read_tree, write_tree};

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::rlr::Topology;
use crate::sites::{same_site, Site, Sites};

#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), found: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument("box with lo > hi".into()));
        }
        Ok(BoundingBox { lo, hi })
    }

    /// Tight box around `sites[range]`.
    pub fn around(sites: &Sites, range: Range<usize>) -> Self {
        let d = sites.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in range {
            for (j, &c) in sites.point(i).iter().enumerate() {
                lo[j] = lo[j].min(c);
                hi[j] = hi[j].max(c);
            }
        }
        BoundingBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Number of sides with positive length.
    pub fn volume_dims(&self) -> usize {
        self.lo.iter().zip(&self.hi).filter(|(a, b)| b > a).count()
    }

    pub fn longest_dim(&self) -> usize {
        let mut best = 0;
        for j in 1..self.dim() {
            if self.hi[j] - self.lo[j] > self.hi[best] - self.lo[best] {
                best = j;
            }
        }
        best
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.iter().enumerate().all(|(j, &c)| self.lo[j] <= c && c <= self.hi[j])
    }

    pub fn contains_box(&self, o: &BoundingBox) -> bool {
        (0..self.dim()).all(|j| self.lo[j] <= o.lo[j] && o.hi[j] <= self.hi[j])
    }

    /// Squared Euclidean distance from `x` to the box (0 inside).
    pub fn distance2(&self, x: &Site) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, &c)| {
                let g = if c < self.lo[j] {
                    self.lo[j] - c
                } else if c > self.hi[j] {
                    c - self.hi[j]
                } else {
                    0.0
                };
                g * g
            })
            .sum()
    }

    pub fn diagonal(&self) -> f64 {
        libm::sqrt(
            (0..self.dim())
                .map(|j| {
                    let s = self.hi[j] - self.lo[j];
                    s * s
                })
                .sum::<f64>(),
        )
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| 0.5 * (self.lo[j] + self.hi[j])).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub range: Range<usize>,
    pub bbox: BoundingBox,
    /// Present exactly on nonleaf nodes.
    pub landmarks: Option<Sites>,
}

impl PartitionNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }
}

#[derive(Clone, Debug)]
pub struct PartitionTree {
    nodes: Vec<PartitionNode>,
    /// perm[original index] = tree position.
    perm: Vec<usize>,
    /// order[tree position] = original index.
    order: Vec<usize>,
    height: usize,
    rank: usize,
    sites: Sites,
    topo: Arc<Topology>,
    leaf_of: Vec<usize>,
    // Tree positions sorted by coordinate bit patterns, for in-sample lookup.
    by_bits: Vec<usize>,
}

impl PartialEq for PartitionTree {
    fn eq(&self, o: &Self) -> bool {
        self.nodes == o.nodes
            && self.perm == o.perm
            && self.height == o.height
            && self.rank == o.rank
            && self.sites == o.sites
    }
}

fn cmp_bits(a: &Site, b: &Site) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.to_bits().cmp(&y.to_bits()) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Builds the partitioning tree for `xs` with rank r.
pub fn build_tree(xs: &Sites, rank: usize, strategy: LandmarkStrategy, seed: u64) -> Result<PartitionTree> {
    let n = xs.len();
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if n < rank || n == 0 {
        return Err(Error::TooFewSites { n, rank });
    }
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&a, &b| cmp_bits(xs.point(a), xs.point(b)).then(a.cmp(&b)));
    for w in sorted.windows(2) {
        if same_site(xs.point(w[0]), xs.point(w[1])) {
            return Err(Error::DuplicateSite { first: w[0].min(w[1]), second: w[0].max(w[1]) });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut nodes: Vec<PartitionNode> = Vec::new();
    let root_box = BoundingBox::around(xs, 0..n);
    split(xs, &mut order, &mut nodes, 0..n, None, root_box, rank);

    let mut perm = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        perm[orig] = pos;
    }
    let sites = xs.select(&order);
    let mut tree = PartitionTree::assemble(nodes, perm, order, rank, sites)?;

    for id in 0..tree.nodes.len() {
        if tree.nodes[id].is_leaf() {
            continue;
        }
        let rg = tree.nodes[id].range.clone();
        let inside = tree.sites.slice(rg.start, rg.end);
        let mut lm = place_landmarks(&tree.nodes[id].bbox, rank, strategy, seed, &inside, id)?;
        tree.separate_from_sites(&mut lm, rg, &tree.nodes[id].bbox);
        tree.nodes[id].landmarks = Some(lm);
    }
    Ok(tree)
}

fn split(
    xs: &Sites,
    order: &mut [usize],
    nodes: &mut Vec<PartitionNode>,
    range: Range<usize>,
    parent: Option<usize>,
    bbox: BoundingBox,
    rank: usize,
) -> usize {
    let id = nodes.len();
    nodes.push(PartitionNode { id, parent, children: Vec::new(), range: range.clone(), bbox, landmarks: None });
    let m = range.len();
    if m < 2 * rank || m < 2 {
        return id;
    }
    let dim = nodes[id].bbox.longest_dim();
    let seg = &mut order[range.clone()];
    seg.sort_by(|&a, &b| xs.point(a)[dim].total_cmp(&xs.point(b)[dim]).then(a.cmp(&b)));
    let half = m / 2;
    let a = xs.point(seg[half - 1])[dim];
    let b = xs.point(seg[half])[dim];
    let cut = if a == b { a } else { (0.5 * (a + b)).clamp(a, b) };
    let mut left = nodes[id].bbox.clone();
    left.hi[dim] = cut;
    let mut right = nodes[id].bbox.clone();
    right.lo[dim] = cut;
    let mid = range.start + half;
    let l = split(xs, order, nodes, range.start..mid, Some(id), left, rank);
    let r = split(xs, order, nodes, mid..range.end, Some(id), right, rank);
    nodes[id].children = vec![l, r];
    id
}

impl PartitionTree {
    /// Derives the lookup tables from nodes and permutation.
    pub(crate) fn assemble(
        nodes: Vec<PartitionNode>,
        perm: Vec<usize>,
        order: Vec<usize>,
        rank: usize,
        sites: Sites,
    ) -> Result<Self> {
        let n = sites.len();
        let topo = Topology::new(
            rank,
            nodes.iter().map(|x| x.parent).collect(),
            nodes.iter().map(|x| x.children.clone()).collect(),
            nodes.iter().map(|x| x.range.clone()).collect(),
        )?;
        if topo.root() != 0 || topo.n() != n {
            return Err(Error::InvalidArgument("tree root must be node 0 covering all sites".into()));
        }
        let mut leaf_of = vec![0; n];
        let mut depth = vec![0usize; nodes.len()];
        let mut height = 0;
        for &i in topo.preorder() {
            if let Some(p) = topo.parent(i) {
                depth[i] = depth[p] + 1;
            }
            if topo.is_leaf(i) {
                height = height.max(depth[i]);
                for pos in topo.range(i) {
                    leaf_of[pos] = i;
                }
            }
        }
        let mut by_bits: Vec<usize> = (0..n).collect();
        by_bits.sort_by(|&a, &b| cmp_bits(sites.point(a), sites.point(b)));
        Ok(PartitionTree { nodes, perm, order, height, rank, sites, topo: Arc::new(topo), leaf_of, by_bits })
    }

    // A landmark sitting on (or within rounding of) a site of its node
    // makes a leaf Schur complement numerically singular. Such landmarks
    // step towards the box center until no site of the node is within
    // rho, a tenth-ish of the typical site spacing.
    fn separate_from_sites(&self, lm: &mut Sites, range: Range<usize>, bbox: &BoundingBox) {
        let d = lm.dim();
        let live = bbox.volume_dims().max(1);
        let diag = bbox.diagonal();
        let rho = 0.05 * diag / libm::pow(range.len() as f64, 1.0 / live as f64);
        if !(rho > 0.0) {
            return;
        }
        let mut idx: Vec<usize> = range.collect();
        idx.sort_by(|&a, &b| self.sites.point(a)[0].total_cmp(&self.sites.point(b)[0]));
        let keys: Vec<f64> = idx.iter().map(|&i| self.sites.point(i)[0]).collect();
        let near = |p: &[f64]| {
            let lo = keys.partition_point(|&v| v < p[0] - rho);
            keys[lo..].iter().zip(&idx[lo..]).take_while(|(v, _)| **v <= p[0] + rho).any(|(_, &i)| {
                let x = self.sites.point(i);
                let d2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 < rho * rho
            })
        };
        let center = bbox.center();
        for k in 0..lm.len() {
            if !near(lm.point(k)) {
                continue;
            }
            let p0 = lm.point(k).to_vec();
            let mut dir: Vec<f64> = center.iter().zip(&p0).map(|(c, p)| c - p).collect();
            let len = libm::sqrt(dir.iter().map(|v| v * v).sum());
            if len > 0.5 * rho {
                dir.iter_mut().for_each(|v| *v /= len);
            } else {
                dir = vec![1.0 / libm::sqrt(d as f64); d];
            }
            for t in 1..=16 {
                let p = lm.point_mut(k);
                for j in 0..d {
                    p[j] = (p0[j] + t as f64 * rho * dir[j]).clamp(bbox.lo[j], bbox.hi[j]);
                }
                if !near(lm.point(k)) {
                    break;
                }
            }
        }
    }

    pub fn nodes(&self) -> &[PartitionNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &PartitionNode {
        &self.nodes[i]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Inverse of `perm`: original index of each tree position.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Sites in tree order.
    pub fn sites(&self) -> &Sites {
        &self.sites
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        self.sites.dim()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn landmarks(&self, i: usize) -> &Sites {
        self.nodes[i].landmarks.as_ref().expect("landmarks live on nonleaf nodes")
    }

    pub fn leaf_of_position(&self, pos: usize) -> usize {
        self.leaf_of[pos]
    }

    /// Tree position of a site bitwise equal to `x`.
    pub fn find_site(&self, x: &Site) -> Option<usize> {
        self.by_bits.binary_search_by(|&pos| cmp_bits(self.sites.point(pos), x)).ok().map(|k| self.by_bits[k])
    }

    /// Leaf responsible for `x`: the leaf of the matching site when `x` is a
    /// site, otherwise the leaf reached by descending into the child box that
    /// contains `x` (nearest box when none does, lower id on ties).
    pub fn locate(&self, x: &Site) -> usize {
        if let Some(pos) = self.find_site(x) {
            return self.leaf_of[pos];
        }
        let mut i = 0;
        while !self.nodes[i].is_leaf() {
            let ch = &self.nodes[i].children;
            i = match ch.iter().find(|&&c| self.nodes[c].bbox.contains(x)) {
                Some(&c) => c,
                None => {
                    let mut best = ch[0];
                    let mut bd = self.nodes[best].bbox.distance2(x);
                    for &c in &ch[1..] {
                        let dc = self.nodes[c].bbox.distance2(x);
                        if dc < bd {
                            best = c;
                            bd = dc;
                        }
                    }
                    best
                }
            };
        }
        i
    }

    /// Path from leaf `l` up to the root, inclusive.
    pub fn path_to_root(&self, l: usize) -> Vec<usize> {
        let mut out = vec![l];
        let mut i = l;
        while let Some(p) = self.nodes[i].parent {
            out.push(p);
            i = p;
        }
        out
    }

    /// Reorders values given per original site into tree order.
    pub fn to_tree_order(&self, v: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&o| v[o]).collect()
    }

    /// Reorders tree-ordered values back to the original site order.
    pub fn to_original_order(&self, v: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| v[p]).collect()
    }
}

#[cfg(test)]
mod tests;
