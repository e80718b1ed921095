use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spinbias::experiments::{
    self, EigenSource, EigenreportConfig, ExperimentConfig, FullspaceConfig, OptimizeConfig,
    QuenchConfig, RunArchive, RunSelector, ScanConfig, ShortestConfig,
};
use spinbias::{Bounds, InitKind, NetworkSpec};

const EXIT_USAGE: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "spinbias",
    version,
    about = "Static bias optimization for excitation transfer in spin rings and chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fixed-time optimization over a grid of transfer times.
    ScanTimes(ScanArgs),
    /// Multistart optimization of biases and time.
    Optimize(OptimizeArgs),
    /// Quenched ring against the matching chain.
    CompareQuench(QuenchArgs),
    /// Shortest high-fidelity time per ring size and output node.
    ShortestTimes(ShortestArgs),
    /// Full 2^N Hamiltonian against the reduced model.
    VerifyFullspace(FullspaceArgs),
    /// ITF and eigenvector alignment of one solution.
    Eigenreport(EigenArgs),
    /// Re-evaluate every run stored in an archive.
    VerifyArchive {
        /// Archive file or the directory holding archive.json.
        path: PathBuf,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct NetworkArgs {
    /// Ring of N spins.
    #[arg(long, value_name = "N")]
    ring: Option<usize>,
    /// Chain of N spins.
    #[arg(long, value_name = "N")]
    chain: Option<usize>,
}

impl NetworkArgs {
    fn spec(&self) -> spinbias::Result<NetworkSpec> {
        match (self.ring, self.chain) {
            (Some(n), _) => NetworkSpec::ring(n),
            (_, Some(n)) => NetworkSpec::chain(n),
            _ => unreachable!("clap enforces one of --ring/--chain"),
        }
    }
}

#[derive(Args, Debug)]
struct Output {
    /// Directory for archive.json and CSV tables.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Input node.
    #[arg(long, default_value_t = 1)]
    from: usize,
    /// Output node.
    #[arg(long)]
    to: usize,
    #[arg(long, default_value_t = 1.0)]
    t_from: f64,
    #[arg(long, default_value_t = 30.0)]
    t_to: f64,
    #[arg(long, default_value_t = 0.2)]
    t_step: f64,
    /// Optimizations per grid time.
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, default_value_t = 1)]
    from: usize,
    #[arg(long)]
    to: usize,
    /// random, symmetric-random, chain-peak-times, symmetric+chain-peaks or patterned.
    #[arg(long, default_value = "symmetric+chain-peaks")]
    strategy: String,
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tie mirror-image biases together.
    #[arg(long)]
    symmetric: bool,
    /// Keep every bias in [LO, HI].
    #[arg(long = "box", num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    bounds: Option<Vec<f64>>,
    /// Optimize the time over (0, TMAX).
    #[arg(long)]
    tmax: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct QuenchArgs {
    /// Ring of N spins.
    #[arg(long, value_name = "N")]
    ring: usize,
    /// Output nodes, comma separated [default: 2..=ceil(N/2)].
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Quench bias values, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 30.0, 100.0])]
    bias: Vec<f64>,
    #[arg(long, default_value_t = 30.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ShortestArgs {
    /// Ring sizes, comma separated [default: 5..=15].
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.99)]
    threshold: f64,
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct FullspaceArgs {
    #[arg(long, default_value_t = 8)]
    n_max: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct EigenArgs {
    /// Archive to read the solution from.
    #[arg(long, conflicts_with_all = ["ring", "chain", "bias", "time"])]
    archive: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    ensemble: usize,
    /// best, fastest or a run index.
    #[arg(long, default_value = "best")]
    run: String,
    #[arg(long, value_name = "N")]
    ring: Option<usize>,
    #[arg(long, value_name = "N")]
    chain: Option<usize>,
    #[arg(long, default_value_t = 1)]
    from: usize,
    #[arg(long)]
    to: Option<usize>,
    /// Biases, comma separated [default: all zero].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    bias: Vec<f64>,
    #[arg(long)]
    time: Option<f64>,
    /// Tolerance of the alignment condition.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

enum Failure {
    Usage(String),
    Verification(String),
    Other(anyhow::Error),
}

impl From<spinbias::Error> for Failure {
    fn from(e: spinbias::Error) -> Self {
        match e {
            spinbias::Error::InvalidArgument(msg) | spinbias::Error::ResourceLimit(msg) => {
                Failure::Usage(msg)
            }
            other => Failure::Other(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn eigen_config(args: &EigenArgs) -> Result<EigenreportConfig, Failure> {
    let source = match &args.archive {
        Some(path) => EigenSource::Archive {
            path: path.clone(),
            ensemble: args.ensemble,
            run: args.run.parse::<RunSelector>()?,
        },
        None => {
            let network = match (args.ring, args.chain) {
                (Some(n), None) => NetworkSpec::ring(n)?,
                (None, Some(n)) => NetworkSpec::chain(n)?,
                _ => {
                    return Err(Failure::Usage(
                        "give --archive, or exactly one of --ring/--chain".into(),
                    ))
                }
            };
            let to = args
                .to
                .ok_or_else(|| Failure::Usage("--to is required without --archive".into()))?;
            let time = args
                .time
                .ok_or_else(|| Failure::Usage("--time is required without --archive".into()))?;
            let bias = if args.bias.is_empty() {
                vec![0.0; network.size()]
            } else {
                args.bias.clone()
            };
            EigenSource::Solution {
                network,
                in_node: args.from,
                out_node: to,
                bias,
                time,
            }
        }
    };
    Ok(EigenreportConfig {
        source,
        condition_tol: args.tol,
    })
}

fn config(command: &Command) -> Result<(ExperimentConfig, Option<PathBuf>), Failure> {
    Ok(match command {
        Command::ScanTimes(a) => {
            let mut c = ScanConfig::new(a.network.spec()?, a.from, a.to);
            (c.t_from, c.t_to, c.t_step, c.repeats, c.seed) =
                (a.t_from, a.t_to, a.t_step, a.repeats, a.seed);
            (ExperimentConfig::ScanTimes(c), a.output.out.clone())
        }
        Command::Optimize(a) => {
            let mut c = OptimizeConfig::new(
                a.network.spec()?,
                a.from,
                a.to,
                a.strategy.parse::<InitKind>()?,
            );
            c.restarts = a.restarts;
            c.seed = a.seed;
            c.symmetric = a.symmetric;
            c.bounds = a.bounds.as_ref().map(|b| Bounds { lo: b[0], hi: b[1] });
            c.t_max = a.tmax;
            (ExperimentConfig::Optimize(c), a.output.out.clone())
        }
        Command::CompareQuench(a) => {
            let mut c = QuenchConfig::new(a.ring);
            if !a.k.is_empty() {
                c.ks = a.k.clone();
            }
            c.biases = a.bias.clone();
            c.t_max = a.t_max;
            c.dt = a.dt;
            (ExperimentConfig::CompareQuench(c), a.output.out.clone())
        }
        Command::ShortestTimes(a) => {
            let mut c = ShortestConfig::default();
            if !a.sizes.is_empty() {
                c.sizes = a.sizes.clone();
            }
            c.threshold = a.threshold;
            c.restarts = a.restarts;
            c.seed = a.seed;
            (ExperimentConfig::ShortestTimes(c), a.output.out.clone())
        }
        Command::VerifyFullspace(a) => {
            let c = FullspaceConfig {
                n_max: a.n_max,
                trials: a.trials,
                seed: a.seed,
            };
            (ExperimentConfig::VerifyFullspace(c), a.output.out.clone())
        }
        Command::Eigenreport(a) => (
            ExperimentConfig::Eigenreport(eigen_config(a)?),
            a.output.out.clone(),
        ),
        Command::VerifyArchive { .. } => unreachable!("handled before dispatch"),
    })
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn verify_archive(path: &Path) -> Result<(), Failure> {
    let archive = RunArchive::load(path)?;
    let report = archive.verify()?;
    emit(&serde_json::to_string_pretty(&report).context("encoding report")?);
    if !report.passed {
        return Err(Failure::Verification(format!(
            "stored infidelities differ from re-evaluation by {:e}",
            report.max_infidelity_error
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::VerifyArchive { path } = &cli.command {
        return verify_archive(path);
    }
    let (config, out) = config(&cli.command)?;
    log::info!("running {}", config.name());
    let archive = experiments::run_experiment(&config)?;
    if let Some(dir) = out {
        let path = archive
            .write(&dir)
            .with_context(|| format!("writing {}", dir.display()))?;
        log::info!("wrote {}", path.display());
    }
    emit(&serde_json::to_string_pretty(&archive.summary).context("encoding summary")?);
    let check = archive.verify()?;
    if !check.passed {
        return Err(Failure::Verification(format!(
            "archived infidelities differ from re-evaluation by {:e}",
            check.max_infidelity_error
        )));
    }
    if let ExperimentConfig::VerifyFullspace(_) = config {
        if archive.summary["passed"] != serde_json::Value::Bool(true) {
            return Err(Failure::Verification(
                "full-space residuals exceed tolerance".into(),
            ));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
