//! `ddlab`: MSE curves, discrepancy sweeps, determinant-preservation checks
//! and surrogate-design samples from the command line.

mod commands;
mod config;
mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, SweepMode};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<ddlab_core::Error> for CliError {
    fn from(e: ddlab_core::Error) -> Self {
        match e {
            ddlab_core::Error::Numerical(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "ddlab", version, about = "Double-descent experiments with surrogate designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file, or a previous output file to rerun.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (output does not depend on it).
    #[arg(long, env = "DDLAB_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// MSE against n (or d): closed form and i.i.d. Monte Carlo.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Skip the Monte Carlo columns.
        #[arg(long)]
        no_mc: bool,
        #[arg(long, value_parser = ["n", "d"])]
        mode: Option<String>,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, value_delimiter = ',')]
        kappa: Option<Vec<f64>>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        /// Explicit grid of n (or d) values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[arg(long)]
        sigma2: Option<f64>,
    },
    /// Variance or bias discrepancy over a dimension grid, with slope fits.
    Discrepancy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["variance", "bias"])]
        kind: Option<String>,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        aspects: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        bias_max_d: Option<usize>,
    },
    /// Determinant-preservation checks on named scenarios.
    DpVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        eigenvalues: Option<Vec<f64>>,
    },
    /// Draw from the surrogate design.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        law: Option<String>,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        chain_steps: Option<usize>,
        /// Number of independent draws summarized.
        #[arg(long)]
        repeat: Option<usize>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => config::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, common.seed);
    if common.trials.is_some() {
        cfg.trials = common.trials;
    }
    Ok(cfg)
}

type Runner = fn(&RunConfig) -> Result<commands::Output, CliError>;

fn resolve(command: Command) -> Result<(RunConfig, Common, Runner), CliError> {
    Ok(match command {
        Command::Curve { common, no_mc, mode, profile, kappa, d, n, values, sigma2 } => {
            let mut cfg = base_config(&common)?;
            let c = &mut cfg.curve;
            if no_mc {
                c.mc = false;
            }
            if let Some(m) = mode {
                c.mode = if m == "d" { SweepMode::D } else { SweepMode::N };
            }
            set(&mut c.profile, profile);
            set(&mut c.kappa, kappa);
            set(&mut c.d, d);
            set(&mut c.n, n);
            set(&mut c.values, values);
            set(&mut c.sigma2, sigma2);
            cfg.resolve_trials(commands::CURVE_TRIALS);
            (cfg, common, commands::curve as Runner)
        }
        Command::Discrepancy { common, kind, profile, kappa, aspects, dims, cap, bias_max_d } => {
            let mut cfg = base_config(&common)?;
            let c = &mut cfg.discrepancy;
            set(&mut c.kind, kind);
            set(&mut c.profile, profile);
            set(&mut c.kappa, kappa);
            set(&mut c.aspects, aspects);
            set(&mut c.dims, dims);
            set(&mut c.cap, cap);
            set(&mut c.bias_max_d, bias_max_d);
            cfg.resolve_trials(commands::DISCREPANCY_TRIALS);
            (cfg, common, commands::discrepancy_cmd as Runner)
        }
        Command::DpVerify { common, scenario, d, gamma, eigenvalues } => {
            let mut cfg = base_config(&common)?;
            let c = &mut cfg.dp_verify;
            set(&mut c.scenario, scenario);
            set(&mut c.d, d);
            set(&mut c.gamma, gamma);
            set(&mut c.eigenvalues, eigenvalues);
            cfg.resolve_trials(commands::DP_TRIALS);
            (cfg, common, commands::dp_verify as Runner)
        }
        Command::Sample { common, d, n, law, profile, kappa, chain_steps, repeat } => {
            let mut cfg = base_config(&common)?;
            let c = &mut cfg.sample;
            set(&mut c.d, d);
            set(&mut c.n, n);
            set(&mut c.law, law);
            set(&mut c.profile, profile);
            set(&mut c.kappa, kappa);
            set(&mut c.chain_steps, chain_steps);
            set(&mut c.repeat, repeat);
            cfg.resolve_trials(0);
            (cfg, common, commands::sample as Runner)
        }
    })
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Invalid(format!("cannot create {}: {e}", dir.display())))?;
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)
            .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cfg, common, runner) = resolve(cli.command)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))?;
    let out = pool.install(|| runner(&cfg))?;
    let mut files = out.files;
    if common.svg {
        files.extend(out.svgs);
    }
    write_all(&common.out, &files)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for line in &out.report {
        println!("{line}");
    }
    for (name, _) in &files {
        println!("wrote {}", common.out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ddlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
