use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A single site is a coordinate slice of length `dim`.
pub type Site = [f64];

/// A list of sites in a flat, row-per-site layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Sites {
    dim: usize,
    coords: Vec<f64>,
}

impl Sites {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("sites need at least one coordinate".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, found: coords.len() % dim });
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("site {} has a non-finite coordinate", bad / dim)));
        }
        Ok(Sites { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        Sites { dim, coords: Vec::new() }
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.as_ref().len());
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Sites::new(dim, coords)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &Site {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Site> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn push(&mut self, p: &Site) {
        assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Sites `range.start..range.end` as a new list.
    pub fn slice(&self, begin: usize, end: usize) -> Sites {
        Sites { dim: self.dim, coords: self.coords[begin * self.dim..end * self.dim].to_vec() }
    }

    /// Sites picked by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Sites {
        let mut out = Sites::empty(self.dim);
        out.coords.reserve(idx.len() * self.dim);
        for &i in idx {
            out.coords.extend_from_slice(self.point(i));
        }
        out
    }
}

/// Bitwise coordinate equality, the nugget's notion of "same site".
#[inline]
pub fn same_site(x: &Site, y: &Site) -> bool {
    x.len() == y.len() && x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits())
}
