//! Recursively low-rank matrices.
//!
//! Every matrix lives on a [`Topology`]: a tree whose nodes own contiguous
//! index ranges. Leaves carry a dense diagonal block A_ii and the bases U_i,
//! V_i; a nonleaf p carries the r×r coupling Σ_p between its children; a
//! nonleaf that is not the root carries the transfer matrices W_p, Z_p that
//! express its basis through its parent's. Vectors are always in tree order.

mod cholesky;
mod codec;
mod dense;
mod invert;
mod matvec;
pub mod riccati;

pub use codec::{decode, encode};

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// A determinant as `sign * exp(log_abs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub sign: i8,
}

impl LogDet {
    pub const ONE: LogDet = LogDet { log_abs: 0.0, sign: 1 };
    pub const ZERO: LogDet = LogDet { log_abs: f64::NEG_INFINITY, sign: 0 };

    pub fn new(log_abs: f64, sign: i8) -> Self {
        if sign == 0 {
            LogDet::ZERO
        } else {
            LogDet { log_abs, sign }
        }
    }
}

impl core::ops::Mul for LogDet {
    type Output = LogDet;
    fn mul(self, o: LogDet) -> LogDet {
        LogDet::new(self.log_abs + o.log_abs, self.sign * o.sign)
    }
}

impl core::ops::MulAssign for LogDet {
    fn mul_assign(&mut self, o: LogDet) {
        *self = *self * o;
    }
}

/// Shape of the tree underneath a recursively low-rank matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    rank: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    ranges: Vec<Range<usize>>,
    preorder: Vec<usize>,
    root: usize,
}

impl Topology {
    /// Validates the node links and ranges: one root, children covering
    /// their parent's range contiguously and in order.
    pub fn new(
        rank: usize,
        parent: Vec<Option<usize>>,
        children: Vec<Vec<usize>>,
        ranges: Vec<Range<usize>>,
    ) -> Result<Self> {
        let m = parent.len();
        let bad = |msg: &str| Err(Error::InvalidArgument(alloc::format!("bad topology: {msg}")));
        if m == 0 || children.len() != m || ranges.len() != m {
            return bad("node arrays differ in length");
        }
        let roots: Vec<usize> = (0..m).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return bad("expected exactly one root");
        }
        let root = roots[0];
        if ranges[root].start != 0 {
            return bad("root range must start at 0");
        }
        for i in 0..m {
            let r = &ranges[i];
            if r.start >= r.end {
                return bad("empty node range");
            }
            if let Some(p) = parent[i] {
                if p >= m || !children[p].contains(&i) {
                    return bad("parent link without matching child link");
                }
            }
            let ch = &children[i];
            if ch.len() == 1 {
                return bad("a nonleaf needs at least two children");
            }
            if !ch.is_empty() {
                let mut at = r.start;
                for &c in ch {
                    if c >= m || parent[c] != Some(i) || ranges[c].start != at {
                        return bad("children do not tile the parent range");
                    }
                    at = ranges[c].end;
                }
                if at != r.end {
                    return bad("children do not tile the parent range");
                }
            }
        }
        let mut preorder = Vec::with_capacity(m);
        let mut stack = alloc::vec![root];
        while let Some(i) = stack.pop() {
            preorder.push(i);
            stack.extend(children[i].iter().rev());
        }
        if preorder.len() != m {
            return bad("nodes unreachable from the root");
        }
        if rank == 0 {
            return bad("rank must be positive");
        }
        Ok(Topology { rank, parent, children, ranges, preorder, root })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.ranges[self.root].end
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.ranges[i].clone()
    }

    pub fn size(&self, i: usize) -> usize {
        self.ranges[i].len()
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    /// Nodes with every parent before its children.
    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    /// Nodes with every child before its parent.
    pub fn postorder(&self) -> impl Iterator<Item = usize> + '_ {
        self.preorder.iter().rev().copied()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.preorder.iter().copied().filter(move |&i| self.is_leaf(i))
    }

    /// Nonleaf, non-root nodes: the ones carrying W and Z.
    pub fn has_transfer(&self, i: usize) -> bool {
        !self.is_leaf(i) && self.parent[i].is_some()
    }
}

/// Factors stored at one node; absent entries are structurally zero-sized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeFactors {
    /// Dense diagonal block (leaves).
    pub diag: Option<Mat>,
    /// Row basis U_i (non-root leaves).
    pub u: Option<Mat>,
    /// Column basis V_i; `None` in symmetric matrices, where it equals U_i.
    pub v: Option<Mat>,
    /// Coupling Σ_p (nonleaves).
    pub sigma: Option<Mat>,
    /// Transfer W_p (nonleaf, non-root).
    pub w: Option<Mat>,
    /// Transfer Z_p; `None` in symmetric matrices, where it equals W_p.
    pub z: Option<Mat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlrMatrix {
    topo: Arc<Topology>,
    nodes: Vec<NodeFactors>,
    symmetric: bool,
}

impl RlrMatrix {
    /// Assembles a matrix after checking every factor's shape. For
    /// symmetric matrices `v` and `z` must be left empty.
    pub fn new(topo: Arc<Topology>, nodes: Vec<NodeFactors>, symmetric: bool) -> Result<Self> {
        let a = RlrMatrix { topo, nodes, symmetric };
        a.check_shapes()?;
        Ok(a)
    }

    pub(crate) fn from_parts_unchecked(topo: Arc<Topology>, nodes: Vec<NodeFactors>, symmetric: bool) -> Self {
        RlrMatrix { topo, nodes, symmetric }
    }

    fn check_shapes(&self) -> Result<()> {
        let t = &*self.topo;
        let r = t.rank();
        if self.nodes.len() != t.num_nodes() {
            return Err(Error::DimensionMismatch { expected: t.num_nodes(), found: self.nodes.len() });
        }
        let want = |m: &Option<Mat>, present: bool, rows: usize, cols: usize| -> Result<()> {
            match (m, present) {
                (None, false) => Ok(()),
                (Some(m), true) if m.nrows() == rows && m.ncols() == cols => Ok(()),
                (Some(m), true) => {
                    Err(Error::DimensionMismatch { expected: rows * cols, found: m.nrows() * m.ncols() })
                }
                _ => Err(Error::TopologyMismatch),
            }
        };
        for i in 0..t.num_nodes() {
            let f = &self.nodes[i];
            let leaf = t.is_leaf(i);
            let root = t.parent(i).is_none();
            let ni = t.size(i);
            want(&f.diag, leaf, ni, ni)?;
            want(&f.u, leaf && !root, ni, r)?;
            want(&f.v, leaf && !root && !self.symmetric, ni, r)?;
            want(&f.sigma, !leaf, r, r)?;
            want(&f.w, !leaf && !root, r, r)?;
            want(&f.z, !leaf && !root && !self.symmetric, r, r)?;
        }
        Ok(())
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn n(&self) -> usize {
        self.topo.n()
    }

    pub fn rank(&self) -> usize {
        self.topo.rank()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn node(&self, i: usize) -> &NodeFactors {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[NodeFactors] {
        &self.nodes
    }

    pub(crate) fn diag(&self, i: usize) -> &Mat {
        self.nodes[i].diag.as_ref().expect("leaf block")
    }

    pub(crate) fn u(&self, i: usize) -> &Mat {
        self.nodes[i].u.as_ref().expect("leaf basis")
    }

    pub(crate) fn v(&self, i: usize) -> &Mat {
        let f = &self.nodes[i];
        f.v.as_ref().or(f.u.as_ref()).expect("leaf basis")
    }

    pub(crate) fn sigma(&self, i: usize) -> &Mat {
        self.nodes[i].sigma.as_ref().expect("coupling")
    }

    pub(crate) fn w(&self, i: usize) -> &Mat {
        self.nodes[i].w.as_ref().expect("transfer")
    }

    pub(crate) fn z(&self, i: usize) -> &Mat {
        let f = &self.nodes[i];
        f.z.as_ref().or(f.w.as_ref()).expect("transfer")
    }

    /// Matrix with every factor zero except identity leaf blocks.
    pub fn identity(topo: Arc<Topology>) -> Self {
        let r = topo.rank();
        let nodes = (0..topo.num_nodes())
            .map(|i| {
                let leaf = topo.is_leaf(i);
                let root = topo.parent(i).is_none();
                let ni = topo.size(i);
                NodeFactors {
                    diag: leaf.then(|| Mat::identity(ni, ni)),
                    u: (leaf && !root).then(|| Mat::zeros(ni, r)),
                    v: None,
                    sigma: (!leaf).then(|| Mat::zeros(r, r)),
                    w: (!leaf && !root).then(|| Mat::zeros(r, r)),
                    z: None,
                }
            })
            .collect();
        RlrMatrix { topo, nodes, symmetric: true }
    }

    pub fn node_mut(&mut self, i: usize) -> &mut NodeFactors {
        &mut self.nodes[i]
    }

    pub fn matvec(&self, b: &[f64]) -> Result<Vec<f64>> {
        matvec::matvec(self, b)
    }

    pub fn invert(&self) -> Result<(RlrMatrix, LogDet)> {
        invert::invert(self)
    }

    pub fn logdet(&self) -> Result<LogDet> {
        invert::invert(self).map(|(_, d)| d)
    }

    pub fn cholesky_like(&self) -> Result<RlrMatrix> {
        cholesky::cholesky_like(self)
    }

    pub fn to_dense(&self) -> Result<Mat> {
        dense::to_dense(self)
    }
}

/// Largest n accepted by [`RlrMatrix::to_dense`].
pub const DENSE_LIMIT: usize = 4096;

pub use matvec::matvec;

pub fn invert(a: &RlrMatrix) -> Result<(RlrMatrix, LogDet)> {
    invert::invert(a)
}

pub fn logdet(a: &RlrMatrix) -> Result<LogDet> {
    a.logdet()
}

pub fn cholesky_like(a: &RlrMatrix) -> Result<RlrMatrix> {
    cholesky::cholesky_like(a)
}

pub fn to_dense(a: &RlrMatrix) -> Result<Mat> {
    dense::to_dense(a)
}

#[cfg(test)]
pub(crate) mod testutil;
