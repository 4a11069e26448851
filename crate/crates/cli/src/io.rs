//! Site tables, tree files and factor dumps.
//!
//! A site table is CSV with header `x1,...,xd` followed by any number of
//! value columns; numbers are written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use rlcov_core::partition::{read_tree, write_tree, PartitionTree};
use rlcov_core::rlr::{decode, encode, RlrMatrix};
use rlcov_core::sites::Sites;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub sites: Sites,
    pub names: Vec<String>,
    /// Value columns, one entry per site each.
    pub columns: Vec<Vec<f64>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.into(), source }
}

fn fmt_err(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Format { path: path.into(), msg: msg.into() }
}

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_table(text: &str, path: &Path) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> =
        rdr.headers().map_err(|e| fmt_err(path, e.to_string()))?.iter().map(String::from).collect();
    let dim = header.iter().take_while(|h| h.starts_with('x')).count();
    if dim == 0 {
        return Err(fmt_err(path, "header must start with coordinate columns x1,...,xd"));
    }
    for (j, h) in header[..dim].iter().enumerate() {
        if *h != format!("x{}", j + 1) {
            return Err(fmt_err(path, format!("expected column x{}, found `{h}`", j + 1)));
        }
    }
    let mut coords = Vec::new();
    let mut columns = vec![Vec::new(); header.len() - dim];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| fmt_err(path, e.to_string()))?;
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| fmt_err(path, format!("row {}: cannot parse `{cell}`", k + 2)))?;
            if j < dim {
                coords.push(v);
            } else {
                columns[j - dim].push(v);
            }
        }
    }
    let sites = Sites::new(dim, coords).map_err(|e| fmt_err(path, e.to_string()))?;
    Ok(Table { sites, names: header[dim..].to_vec(), columns })
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_table(&text, path)
}

pub fn format_table(sites: &Sites, names: &[&str], columns: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = (1..=sites.dim()).map(|j| format!("x{j}")).collect();
    header.extend(names.iter().map(|s| s.to_string()));
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, x) in sites.iter().enumerate() {
        let row: Vec<String> = x.iter().copied().chain(columns.iter().map(|c| c[i])).map(real).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn value_names(count: usize) -> Vec<String> {
    (0..count).map(|k| if k == 0 { "value".to_string() } else { format!("value{}", k + 1) }).collect()
}

/// Writes to `path`, or standard output when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

pub fn load_tree(path: &Path) -> CliResult<PartitionTree> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    read_tree(&text).map_err(|e| fmt_err(path, e.to_string()))
}

pub fn save_tree(path: Option<&Path>, tree: &PartitionTree) -> CliResult<()> {
    emit(path, &write_tree(tree))
}

pub fn load_factor(path: &Path) -> CliResult<RlrMatrix> {
    let buf = fs::read(path).map_err(io_err(path))?;
    decode(&buf).map_err(|e| fmt_err(path, e.to_string()))
}

pub fn save_factor(path: &Path, a: &RlrMatrix) -> CliResult<()> {
    fs::write(path, encode(a)).map_err(io_err(path))
}
