//! Line-oriented text form of a partitioning tree.
//!
//! ```text
//! rlcov-tree 1
//! dim 2 rank 125 height 3 sites 1000 nodes 15
//! site <position> <original index> <coords...>
//! node <id> <parent or -> <begin> <end> <child count> <children...> lo <...> hi <...>
//! landmark <node id> <coords...>
//! ```
//!
//! Reals use 17 significant digits so a write/read cycle is exact.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use super::{BoundingBox, PartitionNode, PartitionTree};
use crate::error::{Error, Result};
use crate::sites::Sites;

const HEADER: &str = "rlcov-tree 1";

fn real(out: &mut String, v: f64) {
    let _ = write!(out, " {v:.16e}");
}

pub fn write_tree(t: &PartitionTree) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(
        s,
        "dim {} rank {} height {} sites {} nodes {}",
        t.dim(),
        t.rank(),
        t.height(),
        t.n(),
        t.nodes().len()
    );
    for pos in 0..t.n() {
        let _ = write!(s, "site {pos} {}", t.order()[pos]);
        for &c in t.sites().point(pos) {
            real(&mut s, c);
        }
        s.push('\n');
    }
    for nd in t.nodes() {
        let _ = write!(s, "node {} ", nd.id);
        match nd.parent {
            Some(p) => {
                let _ = write!(s, "{p}");
            }
            None => s.push('-'),
        }
        let _ = write!(s, " {} {} {}", nd.range.start, nd.range.end, nd.children.len());
        for c in &nd.children {
            let _ = write!(s, " {c}");
        }
        s.push_str(" lo");
        for &v in &nd.bbox.lo {
            real(&mut s, v);
        }
        s.push_str(" hi");
        for &v in &nd.bbox.hi {
            real(&mut s, v);
        }
        s.push('\n');
        if let Some(lm) = &nd.landmarks {
            for p in lm.iter() {
                let _ = write!(s, "landmark {}", nd.id);
                for &c in p {
                    real(&mut s, c);
                }
                s.push('\n');
            }
        }
    }
    s
}

struct Tokens<'a> {
    it: core::str::SplitWhitespace<'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }

    fn word(&mut self) -> Result<&'a str> {
        let line = self.line;
        self.it.next().ok_or(Error::Parse { line, msg: "line ends early".into() })
    }

    fn expect(&mut self, w: &str) -> Result<()> {
        if self.word()? != w {
            return Err(self.err(&format!("expected `{w}`")));
        }
        Ok(())
    }

    fn num<T: FromStr>(&mut self) -> Result<T> {
        let w = self.word()?;
        w.parse().map_err(|_| self.err(&format!("bad number `{w}`")))
    }

    fn reals(&mut self, k: usize) -> Result<Vec<f64>> {
        (0..k).map(|_| self.num::<f64>()).collect()
    }

    fn end(&mut self) -> Result<()> {
        match self.it.next() {
            None => Ok(()),
            Some(w) => Err(self.err(&format!("unexpected `{w}`"))),
        }
    }
}

pub fn read_tree(text: &str) -> Result<PartitionTree> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .map(|(i, l)| Tokens { it: l.split_whitespace(), line: i + 1 })
            .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing {what}") })
    };
    let mut tk = next("header")?;
    if tk.word()? != "rlcov-tree" || tk.word()? != "1" {
        return Err(tk.err("not an rlcov tree file"));
    }
    let mut tk = next("sizes")?;
    tk.expect("dim")?;
    let dim: usize = tk.num()?;
    tk.expect("rank")?;
    let rank: usize = tk.num()?;
    tk.expect("height")?;
    let height: usize = tk.num()?;
    tk.expect("sites")?;
    let n: usize = tk.num()?;
    tk.expect("nodes")?;
    let m: usize = tk.num()?;
    tk.end()?;

    let mut order = vec![usize::MAX; n];
    let mut coords = Vec::with_capacity(n * dim);
    for pos in 0..n {
        let mut tk = next("site line")?;
        tk.expect("site")?;
        if tk.num::<usize>()? != pos {
            return Err(tk.err("site lines must be in position order"));
        }
        let orig: usize = tk.num()?;
        if orig >= n {
            return Err(tk.err("original index out of range"));
        }
        order[pos] = orig;
        coords.extend(tk.reals(dim)?);
        tk.end()?;
    }
    let mut perm = vec![usize::MAX; n];
    for (pos, &o) in order.iter().enumerate() {
        if perm[o] != usize::MAX {
            return Err(Error::Parse { line: 0, msg: "permutation is not a bijection".into() });
        }
        perm[o] = pos;
    }

    let mut nodes: Vec<PartitionNode> = Vec::with_capacity(m);
    let mut pending: Option<(usize, Sites)> = None;
    let flush = |nodes: &mut Vec<PartitionNode>, pending: &mut Option<(usize, Sites)>| {
        if let Some((id, lm)) = pending.take() {
            nodes[id].landmarks = Some(lm);
        }
    };
    for (i, l) in lines {
        let mut tk = Tokens { it: l.split_whitespace(), line: i + 1 };
        match tk.word()? {
            "node" => {
                flush(&mut nodes, &mut pending);
                let id: usize = tk.num()?;
                if id != nodes.len() {
                    return Err(tk.err("node lines must be in id order"));
                }
                let parent = match tk.word()? {
                    "-" => None,
                    w => Some(w.parse::<usize>().map_err(|_| tk.err("bad parent"))?),
                };
                let begin: usize = tk.num()?;
                let end: usize = tk.num()?;
                let nc: usize = tk.num()?;
                let children = (0..nc).map(|_| tk.num::<usize>()).collect::<Result<Vec<_>>>()?;
                tk.expect("lo")?;
                let lo = tk.reals(dim)?;
                tk.expect("hi")?;
                let hi = tk.reals(dim)?;
                tk.end()?;
                let bbox = BoundingBox::new(lo, hi).map_err(|e| tk.err(&format!("{e}")))?;
                nodes.push(PartitionNode { id, parent, children, range: begin..end, bbox, landmarks: None });
            }
            "landmark" => {
                let id: usize = tk.num()?;
                let p = tk.reals(dim)?;
                tk.end()?;
                match &mut pending {
                    Some((pid, lm)) if *pid == id => lm.push(&p),
                    _ => {
                        if id + 1 != nodes.len() {
                            return Err(tk.err("landmarks must follow their node line"));
                        }
                        let mut lm = Sites::empty(dim);
                        lm.push(&p);
                        pending = Some((id, lm));
                    }
                }
            }
            w => return Err(tk.err(&format!("unknown record `{w}`"))),
        }
    }
    flush(&mut nodes, &mut pending);
    if nodes.len() != m {
        return Err(Error::Parse { line: 0, msg: format!("expected {m} nodes, found {}", nodes.len()) });
    }
    for nd in &nodes {
        let want = if nd.is_leaf() { 0 } else { rank };
        if nd.landmarks.as_ref().map_or(0, |l| l.len()) != want {
            return Err(Error::Parse { line: 0, msg: format!("node {} has the wrong landmark count", nd.id) });
        }
    }
    let sites = Sites::new(dim, coords)?;
    let t = PartitionTree::assemble(nodes, perm, order, rank, sites)?;
    if t.height() != height {
        return Err(Error::Parse { line: 2, msg: "height disagrees with the nodes".into() });
    }
    Ok(t)
}
