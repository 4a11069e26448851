use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use rlcov_core::estimate::{fit_mle, linspace, loglik_at, FitResult, Param, ParamSpace};
use rlcov_core::grf::{krige_prepare, loglik, loglik_reps, FieldData, Sampler};
use rlcov_core::hcov::build_hcov;
use rlcov_core::kernels::{KernelParams, KernelSpec};
use rlcov_core::normal::NormalStream;
use rlcov_core::oracle;
use rlcov_core::partition::{build_tree, PartitionTree};
use rlcov_core::sites::Sites;

use crate::config::{Axis, BenchOp, FieldSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, real, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Partition,
    Simulate,
    Krige,
    Loglik,
    Mle,
    Slice,
    Bench,
}

/// Runs `cmd` on a pool capped at `cfg.threads` and returns what belongs
/// in the main output. Side files (holdout, factor dumps) are written here.
pub fn execute(cmd: Command, cfg: &RunConfig) -> CliResult<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Partition => partition(cfg),
        Command::Simulate => simulate(cfg),
        Command::Krige => krige(cfg),
        Command::Loglik => loglik_cmd(cfg),
        Command::Mle => mle(cfg),
        Command::Slice => slice(cfg),
        Command::Bench => bench(cfg),
    })
}

fn spec(cfg: &RunConfig) -> CliResult<KernelSpec> {
    Ok(KernelSpec::new(cfg.family, cfg.params)?)
}

fn input_table(cfg: &RunConfig) -> CliResult<Table> {
    let p = cfg.sites.as_deref().ok_or_else(|| CliError::config("`sites` is required"))?;
    io::read_table(p)
}

fn field_data(cfg: &RunConfig) -> CliResult<FieldData> {
    let t = input_table(cfg)?;
    if t.columns.is_empty() {
        return Err(CliError::config("the sites file has no value column"));
    }
    Ok(FieldData::with_replicates(t.sites, t.columns)?.with_mean(cfg.mean))
}

fn tree_for(cfg: &RunConfig, sites: &Sites) -> CliResult<Arc<PartitionTree>> {
    let tree = match &cfg.tree {
        Some(p) => io::load_tree(p)?,
        None => build_tree(sites, cfg.rank, cfg.landmarks, cfg.seed)?,
    };
    Ok(Arc::new(tree))
}

fn partition(cfg: &RunConfig) -> CliResult<String> {
    let t = input_table(cfg)?;
    let tree = build_tree(&t.sites, cfg.rank, cfg.landmarks, cfg.seed)?;
    Ok(rlcov_core::partition::write_tree(&tree))
}

/// Regular grid including the domain corners, last coordinate fastest.
pub fn grid_sites(counts: &[usize], domain: &[(f64, f64)]) -> Sites {
    let axes: Vec<Vec<f64>> = counts.iter().zip(domain).map(|(&m, &(lo, hi))| linspace(lo, hi, m)).collect();
    let total: usize = counts.iter().product();
    let mut s = Sites::empty(counts.len());
    let mut p = vec![0.0; counts.len()];
    for mut k in 0..total {
        for d in (0..counts.len()).rev() {
            p[d] = axes[d][k % counts[d]];
            k /= counts[d];
        }
        s.push(&p);
    }
    s
}

pub fn test_function(x: &[f64]) -> f64 {
    (1.4 * x[0]).exp() * (3.5 * PI * x[0]).cos() * ((2.0 * PI * x[1]).sin() + 0.2 * (8.0 * PI * x[1]).sin())
}

/// Splits 0..n into a kept part of `round(keep n)` indices and the rest,
/// both ascending.
pub fn split(n: usize, keep: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let k = ((keep * n as f64).round() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut u = NormalStream::new(seed ^ 0x5eed_5eed_5eed_5eed);
    for i in 0..k {
        let j = i + ((u.uniform() * (n - i) as f64) as usize).min(n - i - 1);
        idx.swap(i, j);
    }
    let mut kept = idx[..k].to_vec();
    let mut rest = idx[k..].to_vec();
    kept.sort_unstable();
    rest.sort_unstable();
    (kept, rest)
}

fn simulate(cfg: &RunConfig) -> CliResult<String> {
    let sites = match &cfg.sites {
        Some(_) => input_table(cfg)?.sites,
        None => grid_sites(&cfg.grid, &cfg.domain),
    };
    let n = sites.len();
    // `truth` is what held-out sites report: the field itself, or the
    // noiseless test function.
    let (columns, truth): (Vec<Vec<f64>>, Vec<f64>) = match cfg.field {
        FieldSource::Grf => {
            let tree = tree_for(cfg, &sites)?;
            let h = build_hcov(&spec(cfg)?, tree)?;
            let s = match &cfg.load_factor {
                Some(p) => Sampler::from_factor(&h, io::load_factor(p)?)?,
                None => Sampler::new(&h)?,
            };
            if let Some(p) = &cfg.save_factor {
                io::save_factor(p, s.factor())?;
            }
            let cols = (0..cfg.replicates)
                .map(|k| s.sample(cfg.mean, cfg.seed.wrapping_add(k as u64)))
                .collect::<rlcov_core::Result<Vec<_>>>()?;
            let first = cols[0].clone();
            (cols, first)
        }
        FieldSource::Dense => {
            let kern = spec(cfg)?.prepare()?;
            let k = oracle::DenseMatrix::from_fn(n, n, |i, j| kern.eval(sites.point(i), sites.point(j)))?;
            let l = oracle::dense_chol(&k)?;
            let cols: Vec<Vec<f64>> = (0..cfg.replicates)
                .map(|r| {
                    let mut y = vec![0.0; n];
                    NormalStream::new(cfg.seed.wrapping_add(r as u64)).fill(&mut y);
                    (0..n).map(|i| cfg.mean + (0..=i).map(|j| l[(i, j)] * y[j]).sum::<f64>()).collect()
                })
                .collect();
            let first = cols[0].clone();
            (cols, first)
        }
        FieldSource::TestFunction => {
            if sites.dim() != 2 {
                return Err(CliError::config("the test function needs 2-d sites"));
            }
            let f: Vec<f64> = sites.iter().map(test_function).collect();
            let cols = (0..cfg.replicates)
                .map(|k| {
                    let mut e = vec![0.0; n];
                    NormalStream::new(cfg.seed.wrapping_add(k as u64)).fill(&mut e);
                    f.iter().zip(&e).map(|(v, e)| cfg.mean + v + cfg.noise_sd * e).collect()
                })
                .collect();
            (cols, f.iter().map(|v| cfg.mean + v).collect())
        }
    };
    let names = io::value_names(columns.len());
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    if cfg.keep >= 1.0 {
        return Ok(io::format_table(&sites, &names, &columns));
    }
    let (kept, rest) = split(n, cfg.keep, cfg.seed);
    let pick = |idx: &[usize], v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    if let Some(p) = &cfg.holdout {
        let text = io::format_table(&sites.select(&rest), &["value"], &[pick(&rest, &truth)]);
        io::emit(Some(p), &text)?;
    }
    let cols: Vec<Vec<f64>> = columns.iter().map(|c| pick(&kept, c)).collect();
    Ok(io::format_table(&sites.select(&kept), &names, &cols))
}

fn krige(cfg: &RunConfig) -> CliResult<String> {
    let data = field_data(cfg)?;
    let targets = io::read_table(cfg.targets.as_deref().ok_or_else(|| CliError::config("`targets` is required"))?)?;
    if targets.sites.dim() != data.sites.dim() {
        return Err(CliError::config("targets and sites differ in dimension"));
    }
    let tree = tree_for(cfg, &data.sites)?;
    let h = build_hcov(&spec(cfg)?, tree)?;
    let work = krige_prepare(&h, &data)?;
    let pts: Vec<&[f64]> = targets.sites.iter().collect();
    let res = pts.par_iter().map(|x| work.krige(x)).collect::<rlcov_core::Result<Vec<_>>>()?;
    if work.clamped() > 0 {
        eprintln!("note: {} negative variances clamped to 0", work.clamped());
    }
    let mut order: Vec<usize> = (0..res.len()).collect();
    if cfg.sort_by_variance {
        order.sort_by(|&a, &b| res[a].var0.total_cmp(&res[b].var0));
    }
    let sites = targets.sites.select(&order);
    let mu = order.iter().map(|&i| res[i].mu0).collect();
    let var = order.iter().map(|&i| res[i].var0).collect();
    Ok(io::format_table(&sites, &["mu", "var"], &[mu, var]))
}

fn loglik_cmd(cfg: &RunConfig) -> CliResult<String> {
    let data = field_data(cfg)?;
    let tree = tree_for(cfg, &data.sites)?;
    let h = build_hcov(&spec(cfg)?, tree)?;
    let l = if data.replicates() > 1 { loglik_reps(&h, &data)? } else { loglik(&h, &data)? };
    Ok(format!("{}\n", real(l)))
}

fn params_json(p: &KernelParams) -> Value {
    json!({ "alpha": p.alpha, "ell": p.ell, "nu": p.nu, "tau": p.tau })
}

fn fit_json(space: &ParamSpace, f: &FitResult) -> Value {
    let se: serde_json::Map<String, Value> = if f.std_errors.is_empty() {
        serde_json::Map::new()
    } else {
        space.free.iter().zip(&f.std_errors).map(|((p, _, _), s)| (p.name().to_string(), json!(s))).collect()
    };
    json!({
        "theta_hat": params_json(&f.theta_hat),
        "loglik": f.loglik_at_opt,
        "std_errors": se,
        "converged": f.converged,
        "evaluations": f.trace.len(),
        "first_run": params_json(&f.first_run),
    })
}

fn mle(cfg: &RunConfig) -> CliResult<String> {
    let data = field_data(cfg)?;
    let tree = tree_for(cfg, &data.sites)?;
    let space = ParamSpace::new(cfg.free.clone())?;
    let out = if cfg.nu_sweep.is_empty() {
        let fit = fit_mle(&data, cfg.family, &tree, &space, &cfg.params, &cfg.fit)?;
        fit_json(&space, &fit)
    } else {
        let fixed = ParamSpace::new(space.free.iter().copied().filter(|q| q.0 != Param::Nu).collect())?;
        let fits: Vec<Value> = cfg
            .nu_sweep
            .par_iter()
            .map(|&nu| {
                let mut start = cfg.params;
                start.nu = nu;
                match fit_mle(&data, cfg.family, &tree, &fixed, &start, &cfg.fit) {
                    Ok(f) => json!({ "nu": nu, "fit": fit_json(&fixed, &f) }),
                    Err(e) => json!({ "nu": nu, "error": e.to_string() }),
                }
            })
            .collect();
        json!({ "nu_sweep": fits })
    };
    Ok(format!("{}\n", serde_json::to_string_pretty(&out).expect("json values serialize")))
}

fn axis_values(a: &Axis) -> Vec<f64> {
    linspace(a.lo, a.hi, a.count)
}

/// Two header lines (axis names, column grid), then one row per x value
/// led by that value. Failed evaluations print as `nan`.
fn slice(cfg: &RunConfig) -> CliResult<String> {
    let data = field_data(cfg)?;
    let tree = tree_for(cfg, &data.sites)?;
    let (px, py) = cfg.axes;
    let xs = axis_values(&cfg.xgrid);
    let ys = axis_values(&cfg.ygrid);
    let cells: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (0..ys.len()).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut th = cfg.params;
            px.set(&mut th, xs[i]);
            py.set(&mut th, ys[j]);
            loglik_at(&data, cfg.family, &tree, &th).unwrap_or(f64::NAN)
        })
        .collect();
    let mut out = format!("{},{}\n", px.name(), py.name());
    out.push_str(&std::iter::once(String::new()).chain(ys.iter().map(|&y| real(y))).collect::<Vec<_>>().join(","));
    out.push('\n');
    for (i, &x) in xs.iter().enumerate() {
        let row: Vec<String> =
            std::iter::once(real(x)).chain(vals[i * ys.len()..(i + 1) * ys.len()].iter().map(|&v| real(v))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn uniform_sites(n: usize, dim: usize, seed: u64) -> Sites {
    let mut u = NormalStream::new(seed);
    let coords = (0..n * dim).map(|_| u.uniform()).collect();
    Sites::new(dim, coords).expect("uniform coordinates are finite")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn time<T>(f: impl FnOnce() -> rlcov_core::Result<T>) -> CliResult<(f64, T)> {
    let t = Instant::now();
    let v = f()?;
    Ok((t.elapsed().as_secs_f64(), v))
}

/// Median wall time per operation. `krige` is per target site.
pub fn bench_rows(cfg: &RunConfig) -> CliResult<Vec<(usize, BenchOp, f64)>> {
    let spec = spec(cfg)?;
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let sites = uniform_sites(n, 2, cfg.seed);
        let mut z = vec![0.0; n];
        NormalStream::new(cfg.seed ^ 1).fill(&mut z);
        let data = FieldData::new(sites.clone(), z)?;
        let tree = Arc::new(build_tree(&sites, cfg.rank, cfg.landmarks, cfg.seed)?);
        let targets = uniform_sites(cfg.bench_targets.max(1), 2, cfg.seed ^ 2);
        for &op in &cfg.ops {
            let mut ts = Vec::with_capacity(cfg.repeats);
            for _ in 0..cfg.repeats {
                let t = match op {
                    BenchOp::Build => {
                        time(|| {
                            build_tree(&sites, cfg.rank, cfg.landmarks, cfg.seed)
                                .and_then(|t| build_hcov(&spec, Arc::new(t)))
                        })?
                        .0
                    }
                    BenchOp::Loglik => time(|| build_hcov(&spec, tree.clone()).and_then(|h| loglik(&h, &data)))?.0,
                    BenchOp::Prepare => {
                        let h = build_hcov(&spec, tree.clone())?;
                        time(|| krige_prepare(&h, &data).map(|_| ()))?.0
                    }
                    BenchOp::Krige => {
                        let h = build_hcov(&spec, tree.clone())?;
                        let work = krige_prepare(&h, &data)?;
                        let (t, _) =
                            time(|| targets.iter().map(|x| work.krige(x)).collect::<rlcov_core::Result<Vec<_>>>())?;
                        t / targets.len() as f64
                    }
                    BenchOp::Sample => {
                        let h = build_hcov(&spec, tree.clone())?;
                        time(|| Sampler::new(&h).and_then(|s| s.sample(0.0, cfg.seed)))?.0
                    }
                };
                ts.push(t);
            }
            rows.push((n, op, median(ts)));
        }
    }
    Ok(rows)
}

fn bench(cfg: &RunConfig) -> CliResult<String> {
    let mut out = String::from("n,op,seconds\n");
    for (n, op, t) in bench_rows(cfg)? {
        out.push_str(&format!("{n},{},{}\n", op.name(), real(t)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_corners() {
        let s = grid_sites(&[2, 3], &[(0.0, 1.0), (-1.0, 1.0)]);
        assert_eq!(s.len(), 6);
        assert_eq!(s.point(0), &[0.0, -1.0]);
        assert_eq!(s.point(1), &[0.0, 0.0]);
        assert_eq!(s.point(5), &[1.0, 1.0]);
    }

    #[test]
    fn split_partitions() {
        let (a, b) = split(2000, 0.5, 3);
        assert_eq!((a.len(), b.len()), (1000, 1000));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..2000).collect::<Vec<_>>());
        assert_eq!(split(2000, 0.5, 3), (a, b));
        assert_ne!(split(2000, 0.5, 4).0, split(2000, 0.5, 3).0);
    }

    #[test]
    fn test_function_values() {
        assert_eq!(test_function(&[0.3, 0.0]), 0.0);
        let want = (1.4f64).exp() * (3.5 * PI).cos() * (1.0 + 0.2 * (2.0 * PI).sin());
        assert!((test_function(&[1.0, 0.25]) - want).abs() < 1e-12);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
