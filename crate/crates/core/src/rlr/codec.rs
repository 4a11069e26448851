//! Binary dump of a factor set.
//!
//! Layout, all fields little-endian 8-byte words:
//! magic `RLRMAT01`; n; r; node count; symmetric flag; then per node in id
//! order: parent (-1 for the root), begin, end, child count, child ids,
//! a presence mask over (diag, u, v, sigma, w, z), and for every present
//! factor its row count, column count and row-major f64 entries.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{NodeFactors, RlrMatrix, Topology};
use crate::error::{Error, Result};
use crate::linalg::Mat;

const MAGIC: &[u8; 8] = b"RLRMAT01";

pub fn encode(a: &RlrMatrix) -> Vec<u8> {
    let t = &**a.topology();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
    put(&mut out, t.n() as u64);
    put(&mut out, t.rank() as u64);
    put(&mut out, t.num_nodes() as u64);
    put(&mut out, a.is_symmetric() as u64);
    for i in 0..t.num_nodes() {
        out.extend_from_slice(&t.parent(i).map_or(-1i64, |p| p as i64).to_le_bytes());
        let rg = t.range(i);
        put(&mut out, rg.start as u64);
        put(&mut out, rg.end as u64);
        put(&mut out, t.children(i).len() as u64);
        for &c in t.children(i) {
            put(&mut out, c as u64);
        }
        let f = a.node(i);
        let slots = [&f.diag, &f.u, &f.v, &f.sigma, &f.w, &f.z];
        let mask = slots.iter().enumerate().fold(0u64, |m, (k, s)| if s.is_some() { m | (1 << k) } else { m });
        put(&mut out, mask);
        for m in slots.into_iter().flatten() {
            put(&mut out, m.nrows() as u64);
            put(&mut out, m.ncols() as u64);
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn word(&mut self) -> Result<[u8; 8]> {
        let end = self.at + 8;
        let bytes = self.buf.get(self.at..end).ok_or_else(|| corrupt(self.at, "unexpected end of data"))?;
        self.at = end;
        Ok(bytes.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<u64> {
        self.word().map(u64::from_le_bytes)
    }

    fn usize(&mut self, limit: u64) -> Result<usize> {
        let at = self.at;
        let v = self.u64()?;
        if v > limit {
            return Err(corrupt(at, "field out of range"));
        }
        Ok(v as usize)
    }
}

fn corrupt(at: usize, msg: &str) -> Error {
    Error::InvalidArgument(format!("corrupt factor file at byte {at}: {msg}"))
}

pub fn decode(buf: &[u8]) -> Result<RlrMatrix> {
    if buf.get(..8) != Some(&MAGIC[..]) {
        return Err(corrupt(0, "bad magic"));
    }
    let mut rd = Reader { buf, at: 8 };
    let limit = buf.len() as u64;
    let n = rd.usize(limit * 8)?;
    let r = rd.usize(limit)?;
    let m = rd.usize(limit)?;
    let sym = match rd.u64()? {
        0 => false,
        1 => true,
        _ => return Err(corrupt(rd.at - 8, "bad symmetric flag")),
    };
    let mut parent = Vec::with_capacity(m);
    let mut children = Vec::with_capacity(m);
    let mut ranges = Vec::with_capacity(m);
    let mut nodes = Vec::with_capacity(m);
    for _ in 0..m {
        let p = i64::from_le_bytes(rd.word()?);
        parent.push(if p < 0 { None } else { Some(p as usize) });
        let begin = rd.usize(n as u64)?;
        let end = rd.usize(n as u64)?;
        ranges.push(begin..end);
        let nc = rd.usize(m as u64)?;
        let mut ch = Vec::with_capacity(nc);
        for _ in 0..nc {
            ch.push(rd.usize(m as u64)?);
        }
        children.push(ch);
        let mask = rd.u64()?;
        let mut slots: [Option<Mat>; 6] = Default::default();
        for (k, slot) in slots.iter_mut().enumerate() {
            if mask & (1 << k) == 0 {
                continue;
            }
            let rows = rd.usize(limit)?;
            let cols = rd.usize(limit)?;
            if rows.saturating_mul(cols).saturating_mul(8) > buf.len() - rd.at {
                return Err(corrupt(rd.at, "factor larger than the remaining data"));
            }
            let mut mat = Mat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    mat[(i, j)] = f64::from_le_bytes(rd.word()?);
                }
            }
            *slot = Some(mat);
        }
        let [diag, u, v, sigma, w, z] = slots;
        nodes.push(NodeFactors { diag, u, v, sigma, w, z });
    }
    if rd.at != buf.len() {
        return Err(corrupt(rd.at, "trailing bytes"));
    }
    let topo = Topology::new(r, parent, children, ranges)?;
    if topo.n() != n {
        return Err(corrupt(8, "n disagrees with the root range"));
    }
    RlrMatrix::new(Arc::new(topo), nodes, sym)
}
