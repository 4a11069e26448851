//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Command-line flags
//! override file values; unknown keys are rejected either way.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rlcov_core::estimate::{FitOptions, Param};
use rlcov_core::kernels::{Family, KernelParams};
use rlcov_core::partition::LandmarkStrategy;

use crate::error::{CliError, CliResult};

/// Every key a config may set, with its default ("" means unset).
pub const KEYS: &[(&str, &str)] = &[
    ("kernel", "matern"),
    ("alpha", "0"),
    ("ell", "0.2"),
    ("nu", "2.5"),
    ("tau", "none"),
    ("rank", "125"),
    ("landmarks", "grid"),
    ("seed", "0"),
    ("threads", "0"),
    ("out", ""),
    ("sites", ""),
    ("tree", ""),
    ("targets", ""),
    ("mean", "0"),
    ("grid", "40x50"),
    ("domain", "-0.8:0.8,-1:1"),
    ("keep", "1"),
    ("holdout", ""),
    ("field", "grf"),
    ("noise_sd", "0"),
    ("replicates", "1"),
    ("save_factor", ""),
    ("load_factor", ""),
    ("free", "alpha:-2:2,ell:0.01:2,nu:0.3:5"),
    ("max_evals", "1000"),
    ("initial_step", "0.5"),
    ("xtol", "1e-4"),
    ("ftol", "1e-6"),
    ("restart", "true"),
    ("nu_sweep", ""),
    ("axes", "alpha,ell"),
    ("xgrid", "-0.5:0.5:5"),
    ("ygrid", "0.1:0.3:5"),
    ("sort", "none"),
    ("sizes", "1024,2048,4096"),
    ("ops", "loglik,krige"),
    ("repeats", "5"),
    ("bench_targets", "1000"),
];

/// Raw key/value pairs, checked against [`KEYS`] on insertion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = key.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn parse_text(text: &str) -> CliResult<Self> {
        let mut raw = RawConfig::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", k + 1)))?;
            if raw.values.contains_key(key.trim()) {
                return Err(CliError::config(format!("line {}: `{}` set twice", k + 1, key.trim())));
            }
            raw.set(key, value).map_err(|e| CliError::config(format!("line {}: {e}", k + 1)))?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        Self::parse_text(&text)
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d).unwrap())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldSource {
    /// A draw from the k_h model itself.
    Grf,
    /// A draw from the exact kernel through a dense Cholesky factor.
    Dense,
    /// exp(1.4 x1) cos(3.5 pi x1) (sin(2 pi x2) + 0.2 sin(8 pi x2)).
    TestFunction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    Build,
    Loglik,
    Prepare,
    Krige,
    Sample,
}

impl BenchOp {
    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Build => "build",
            BenchOp::Loglik => "loglik",
            BenchOp::Prepare => "krige_prepare",
            BenchOp::Krige => "krige",
            BenchOp::Sample => "sample",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [BenchOp::Build, BenchOp::Loglik, BenchOp::Prepare, BenchOp::Krige, BenchOp::Sample]
            .into_iter()
            .find(|op| op.name() == s)
    }
}

/// A closed grid axis `lo:hi:count`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub params: KernelParams,
    pub rank: usize,
    pub landmarks: LandmarkStrategy,
    pub seed: u64,
    /// 0 lets the thread pool decide.
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub sites: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub mean: f64,
    pub grid: Vec<usize>,
    pub domain: Vec<(f64, f64)>,
    pub keep: f64,
    pub holdout: Option<PathBuf>,
    pub field: FieldSource,
    pub noise_sd: f64,
    pub replicates: usize,
    pub save_factor: Option<PathBuf>,
    pub load_factor: Option<PathBuf>,
    pub free: Vec<(Param, f64, f64)>,
    pub fit: FitOptions,
    pub nu_sweep: Vec<f64>,
    pub axes: (Param, Param),
    pub xgrid: Axis,
    pub ygrid: Axis,
    pub sort_by_variance: bool,
    pub sizes: Vec<usize>,
    pub ops: Vec<BenchOp>,
    pub repeats: usize,
    pub bench_targets: usize,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim().parse().map_err(|_| CliError::config(format!("`{key}`: cannot parse `{v}`")))
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| f(s.trim())).collect::<CliResult<_>>().map_err(|e| match e {
        CliError::Config(m) if !m.starts_with('`') => CliError::config(format!("`{key}`: {m}")),
        e => e,
    })
}

fn param(key: &str, s: &str) -> CliResult<Param> {
    Param::parse(s).ok_or_else(|| CliError::config(format!("`{key}`: unknown parameter `{s}`")))
}

fn axis(key: &str, v: &str) -> CliResult<Axis> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::config(format!("`{key}`: expected lo:hi:count")));
    }
    let a = Axis { lo: num(key, parts[0])?, hi: num(key, parts[1])?, count: num(key, parts[2])? };
    if a.count == 0 || (a.count > 1 && !(a.lo < a.hi)) {
        return Err(CliError::config(format!("`{key}`: empty axis")));
    }
    Ok(a)
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        let g = |k: &str| raw.get(k);
        let family =
            Family::parse(g("kernel")).ok_or_else(|| CliError::config(format!("unknown kernel `{}`", g("kernel"))))?;
        let tau = match g("tau") {
            "none" | "" => None,
            v => Some(num("tau", v)?),
        };
        let params = KernelParams::new(num("alpha", g("alpha"))?, num("ell", g("ell"))?, num("nu", g("nu"))?, tau);
        let landmarks = LandmarkStrategy::parse(g("landmarks"))
            .ok_or_else(|| CliError::config(format!("unknown landmark strategy `{}`", g("landmarks"))))?;
        let grid = g("grid").split('x').map(|s| num("grid", s)).collect::<CliResult<Vec<usize>>>()?;
        let domain = list("domain", g("domain"), |s| {
            let (lo, hi) = s.split_once(':').ok_or_else(|| CliError::config("`domain`: expected lo:hi per axis"))?;
            Ok((num("domain", lo)?, num("domain", hi)?))
        })?;
        if grid.len() != domain.len() || grid.iter().any(|&m| m < 2) || domain.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(CliError::config(
                "`grid` and `domain` must agree in dimension, with at least 2 points and lo < hi per axis",
            ));
        }
        let keep: f64 = num("keep", g("keep"))?;
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(CliError::config("`keep` must lie in (0, 1]"));
        }
        let field = match g("field") {
            "grf" => FieldSource::Grf,
            "dense" => FieldSource::Dense,
            "testfn" => FieldSource::TestFunction,
            v => return Err(CliError::config(format!("unknown field `{v}` (grf, dense or testfn)"))),
        };
        let free = list("free", g("free"), |s| {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(CliError::config("`free`: expected name:lo:hi per parameter"));
            }
            Ok((param("free", parts[0])?, num("free", parts[1])?, num("free", parts[2])?))
        })?;
        let fit = FitOptions {
            max_evals: num("max_evals", g("max_evals"))?,
            initial_step: num("initial_step", g("initial_step"))?,
            xtol: num("xtol", g("xtol"))?,
            ftol: num("ftol", g("ftol"))?,
            restart: num("restart", g("restart"))?,
        };
        let axes = list("axes", g("axes"), |s| param("axes", s))?;
        if axes.len() != 2 || axes[0] == axes[1] {
            return Err(CliError::config("`axes` needs two distinct parameters"));
        }
        let sort_by_variance = match g("sort") {
            "none" => false,
            "variance" => true,
            v => return Err(CliError::config(format!("unknown sort `{v}` (none or variance)"))),
        };
        let ops = list("ops", g("ops"), |s| {
            BenchOp::parse(s).ok_or_else(|| CliError::config(format!("`ops`: unknown op `{s}`")))
        })?;
        let repeats: usize = num("repeats", g("repeats"))?;
        let replicates: usize = num("replicates", g("replicates"))?;
        if repeats == 0 || replicates == 0 {
            return Err(CliError::config("`repeats` and `replicates` must be positive"));
        }
        Ok(RunConfig {
            family,
            params,
            rank: num("rank", g("rank"))?,
            landmarks,
            seed: num("seed", g("seed"))?,
            threads: num("threads", g("threads"))?,
            out: path(g("out")),
            sites: path(g("sites")),
            tree: path(g("tree")),
            targets: path(g("targets")),
            mean: num("mean", g("mean"))?,
            grid,
            domain,
            keep,
            holdout: path(g("holdout")),
            field,
            noise_sd: num("noise_sd", g("noise_sd"))?,
            replicates,
            save_factor: path(g("save_factor")),
            load_factor: path(g("load_factor")),
            free,
            fit,
            nu_sweep: list("nu_sweep", g("nu_sweep"), |s| num("nu_sweep", s))?,
            axes: (axes[0], axes[1]),
            xgrid: axis("xgrid", g("xgrid"))?,
            ygrid: axis("ygrid", g("ygrid"))?,
            sort_by_variance,
            sizes: list("sizes", g("sizes"), |s| num("sizes", s))?,
            ops,
            repeats,
            bench_targets: num("bench_targets", g("bench_targets"))?,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        Self::from_raw(&RawConfig::parse_text(text)?)
    }
}
