use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlcov::{execute, CliError, CliResult, Command, RawConfig, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "rlcov", version, about = "Gaussian random fields with recursively low-rank covariance")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    rank: Option<usize>,
    #[arg(long, global = true)]
    kernel: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    ell: Option<f64>,
    #[arg(long, global = true)]
    nu: Option<f64>,
    /// log10 nugget, or `none`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Build a partitioning tree for a sites file.
    Partition,
    /// Draw a field (or the test function) on a grid or given sites.
    Simulate,
    /// Predict at target sites.
    Krige,
    /// Log-likelihood of the data.
    Loglik,
    /// Maximum-likelihood fit, as JSON.
    Mle,
    /// Log-likelihood over a two-parameter grid.
    Slice,
    /// Timing table.
    Bench,
}

fn config(cli: &Cli) -> CliResult<RunConfig> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    let flags: [(&str, Option<String>); 9] = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("rank", cli.rank.map(|v| v.to_string())),
        ("kernel", cli.kernel.clone()),
        ("alpha", cli.alpha.map(|v| v.to_string())),
        ("ell", cli.ell.map(|v| v.to_string())),
        ("nu", cli.nu.map(|v| v.to_string())),
        ("tau", cli.tau.clone()),
        ("threads", cli.threads.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            raw.set(k, &v)?;
        }
    }
    for kv in &cli.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        raw.set(k, v)?;
    }
    RunConfig::from_raw(&raw)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = config(cli)?;
    let cmd = match cli.command {
        Cmd::Partition => Command::Partition,
        Cmd::Simulate => Command::Simulate,
        Cmd::Krige => Command::Krige,
        Cmd::Loglik => Command::Loglik,
        Cmd::Mle => Command::Mle,
        Cmd::Slice => Command::Slice,
        Cmd::Bench => Command::Bench,
    };
    let text = execute(cmd, &cfg)?;
    rlcov::io::emit(cfg.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
