use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigabc_cli::commands::{self, RunSpec, SweepOptions};
use sigabc_cli::{CliError, CliResult, ExperimentConfig, Method, THREADS_ENV};

#[derive(Parser)]
#[command(name = "sigabc", version, about = "Signature-kernel ABC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; defaults to a path under the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Budget {
    /// Simulations (default from the config).
    #[arg(long)]
    n: Option<usize>,
    /// Retained particles (default from the config).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the observation at `theta_true`.
    Simulate(Common),
    /// Run rejection ABC with one method and seed.
    Infer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: Budget,
        /// sig, sig_leadlag, skrr, mmd, wass or sa (default: first configured).
        #[arg(long)]
        method: Option<String>,
    },
    /// Sample the reference posterior.
    Reference(Common),
    /// Compare a particle file with a reference sample.
    Evaluate {
        /// Particle CSV; defaults to the one for `--method` and `--seed`.
        #[arg(long)]
        particles: Option<PathBuf>,
        /// Reference CSV; defaults to the one under `out_dir`.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Compare even when the config fingerprints differ.
        #[arg(long)]
        force: bool,
    },
    /// Infer and evaluate every (method, seed) pair without a result.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        budget: Budget,
        /// Restrict to one method.
        #[arg(long)]
        method: Option<String>,
        /// Restrict to one seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Recompute stale results and accept mismatched references.
        #[arg(long)]
        force: bool,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))
}

fn method_or_first(cfg: &ExperimentConfig, method: Option<&str>) -> CliResult<Method> {
    match method {
        Some(m) => Method::parse(m),
        None => Ok(cfg.methods[0]),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            println!("{}", commands::simulate(&cfg, c.seed, c.out.as_deref())?.display());
        }
        Command::Infer { common: c, budget, method } => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let run = RunSpec {
                method: method_or_first(&cfg, method.as_deref())?,
                seed: c.seed.unwrap_or(cfg.seeds.first().copied().unwrap_or(0)),
                n: budget.n.unwrap_or(cfg.budget.n),
                m: budget.m.unwrap_or(cfg.budget.m),
            };
            println!("{}", commands::infer(&cfg, run, c.out.as_deref())?.display());
        }
        Command::Reference(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            println!("{}", commands::reference(&cfg, c.seed, c.out.as_deref())?.display());
        }
        Command::Evaluate { particles, reference, config, method, seed, out, force } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let need = |what: &str| CliError::Validation(format!("evaluate needs --{what} or --config"));
            let particles = match (particles, &cfg) {
                (Some(p), _) => p,
                (None, Some(cfg)) => {
                    let m = method_or_first(cfg, method.as_deref())?;
                    let s = seed.unwrap_or(cfg.seeds.first().copied().unwrap_or(0));
                    commands::particles_path(cfg, m, s)
                }
                (None, None) => return Err(need("particles")),
            };
            let reference = match (reference, &cfg) {
                (Some(r), _) => r,
                (None, Some(cfg)) => commands::reference_path(cfg),
                (None, None) => return Err(need("reference")),
            };
            println!("{}", commands::evaluate(&particles, &reference, out.as_deref(), force)?.display());
        }
        Command::Sweep { config, budget, method, seed, force } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mut opts = SweepOptions::from_config(&cfg);
            if let Some(m) = method {
                opts.methods = vec![Method::parse(&m)?];
            }
            if let Some(s) = seed {
                opts.seeds = vec![s];
            }
            opts.n = budget.n.unwrap_or(opts.n);
            opts.m = budget.m.unwrap_or(opts.m);
            opts.force = force;
            let report = commands::sweep(&cfg, &opts)?;
            log::info!("sweep: {} run, {} skipped", report.ran, report.skipped);
            println!("{}", commands::sweep_path(&cfg).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
