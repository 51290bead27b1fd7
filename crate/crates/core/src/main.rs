use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csflock::analysis::{critical_velocity_estimate, critical_velocity_exact, EXACT_MAX_K};
use csflock::experiment::{detect_flocking, monte_carlo_sweep, run_rng, run_trajectory};
use csflock::io::{load_config, write_critical_velocity, write_sweep, write_trajectory, IoError, ParsedConfig};
use csflock::verify::verify_bounds_report;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BOUNDS: u8 = 3;

#[derive(Parser)]
#[command(name = "csflock", version, about = "Cucker-Smale flocking under random link failures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overrides `seed` in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. --set lambda=0.9 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write trajectory.csv
    Simulate(Common),
    /// Monte Carlo sweep over the [sweep] grid, written to sweep.csv
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
    /// Estimate the critical velocity (mean Fiedler number of the link graph)
    CriticalVelocity {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Check the convergence bound chain along one trajectory
    VerifyBounds(Common),
}

enum Failure {
    Config(String),
    Runtime(String),
    Bounds(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<csflock::FlockError> for Failure {
    fn from(e: csflock::FlockError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(common: &Common) -> Result<ParsedConfig, Failure> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    Ok(load_config(common.config.as_deref(), &overrides)?)
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?.base;
    let record = run_trajectory(&cfg)?;
    let path = common.out.join("trajectory.csv");
    write_trajectory(&record, &cfg, &path)?;
    match detect_flocking(&record, cfg.epsilon) {
        Some(t) => println!("flocked at step {t}; wrote {}", path.display()),
        None => println!("no flocking within {} steps; wrote {}", cfg.horizon, path.display()),
    }
    Ok(())
}

fn sweep(common: &Common, runs: usize) -> Result<(), Failure> {
    let parsed = load(common)?;
    let grid = parsed.grid()?;
    let summary = monte_carlo_sweep(&grid, runs, parsed.base.master_seed)?;
    let path = common.out.join("sweep.csv");
    write_sweep(&summary, runs, &path)?;
    for c in &summary.cells {
        println!(
            "k={} alpha={} lambda={} flocking_fraction={}",
            c.k, c.alpha, c.lambda, c.flocking_fraction
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn critical_velocity(common: &Common, samples: usize) -> Result<(), Failure> {
    let cfg = load(common)?.base;
    let mut rng = run_rng(cfg.master_seed, 0);
    let est = critical_velocity_estimate(cfg.k, cfg.lambda, samples, &mut rng)?;
    let exact = if cfg.k <= EXACT_MAX_K {
        Some(critical_velocity_exact(cfg.k, cfg.lambda)?)
    } else {
        None
    };
    let path = common.out.join("critical_velocity.csv");
    write_critical_velocity(&path, cfg.k, cfg.lambda, samples, cfg.master_seed, &est, exact)?;
    print!("v* ~ {:.6} +- {:.6}", est.mean, est.std_error);
    if let Some(x) = exact {
        print!(" (exact {x:.6})");
    }
    println!("; wrote {}", path.display());
    Ok(())
}

fn verify_bounds(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?.base;
    let path = common.out.join("bounds_report.txt");
    let report = verify_bounds_report(&cfg, &path)?;
    print!("{}", report.to_text());
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Bounds(format!("bound check failed; see {}", Path::new(&path).display())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Sweep { common, runs } => sweep(common, *runs),
        Command::CriticalVelocity { common, samples } => critical_velocity(common, *samples),
        Command::VerifyBounds(c) => verify_bounds(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Bounds(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_BOUNDS)
        }
    }
}
