use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toda_core::harness::{
    cmd_sweep, cmd_verify, simulate_backlund, simulate_continuous, write_sweep_csv, Experiment, RunConfig,
};
use toda_core::{Boundary, TodaError};

/// Multi-time Lagrangian and Bäcklund checks for the Toda lattice.
#[derive(Parser)]
#[command(name = "toda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite and write report.json.
    Verify(Common),
    /// Write a trajectory to trajectory.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Continuous flows along the configured path, or iterates of F_lambda.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Scan a grid of (N, lambda, mu) and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Particle counts, comma separated.
        #[arg(long = "n-grid", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Continuous,
    Backlund,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Open,
    Periodic,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
    #[arg(long)]
    n: Option<usize>,
    /// Bäcklund parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    /// Second Bäcklund / spectral parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    mu: Option<Vec<f64>>,
    /// RK4 step for continuous flows.
    #[arg(long)]
    step: Option<f64>,
    /// Tolerance applied to every check.
    #[arg(long)]
    tol: Option<f64>,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<TodaError> for Failure {
    fn from(e: TodaError) -> Self {
        match e {
            TodaError::Config(_) | TodaError::Contract(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    if let Some(b) = common.boundary {
        cfg.boundary = match b {
            BoundaryArg::Open => Boundary::OpenEnd,
            BoundaryArg::Periodic => Boundary::Periodic,
        };
    }
    if let Some(v) = common.n {
        cfg.n = v;
    }
    if let Some(v) = &common.lambda {
        cfg.lambda = v.clone();
    }
    if let Some(v) = &common.mu {
        cfg.mu = v.clone();
    }
    if let Some(v) = common.step {
        cfg.step = v;
    }
    if common.tol.is_some() {
        cfg.tol = common.tol;
    }
    if cfg.state.as_ref().is_some_and(|s| s.n() != cfg.n) {
        return Err(Failure::Config(format!(
            "explicit state does not have n = {} sites",
            cfg.n
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))
}

fn verify(common: &Common) -> Result<bool, Failure> {
    let cfg = load(common)?;
    let report = cmd_verify(&cfg)?;
    for c in &report.checks {
        let value = c.value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3e}"));
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:<28} {value:>10} (tol {:.0e})", c.name, c.tolerance);
        if let Some(e) = &c.error {
            println!("     {e}");
        }
    }
    let path = cfg.out.join("report.json");
    fs::create_dir_all(&cfg.out).map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(&path, report.to_json()).map_err(|e| Failure::Run(e.to_string()))?;
    println!("status: {} ({})", report.status, path.display());
    Ok(report.passed())
}

fn simulate(common: &Common, mode: Option<Mode>) -> Result<bool, Failure> {
    let mut cfg = load(common)?;
    let mode = mode.unwrap_or(match cfg.experiment {
        Experiment::Backlund => Mode::Backlund,
        _ => Mode::Continuous,
    });
    cfg.experiment = match mode {
        Mode::Continuous => Experiment::Continuous,
        Mode::Backlund => Experiment::Backlund,
    };
    let mut out = create(&cfg.out, "trajectory.csv")?;
    let outcome = match mode {
        Mode::Continuous => simulate_continuous(&cfg, &mut out)?,
        Mode::Backlund => simulate_backlund(&cfg, &mut out)?,
    };
    match outcome.error {
        None => {
            println!(
                "wrote {} rows to {}",
                outcome.rows,
                cfg.out.join("trajectory.csv").display()
            );
            Ok(true)
        }
        Some((step, e)) => {
            eprintln!("stopped at step {step} after {} rows: {e}", outcome.rows);
            Ok(false)
        }
    }
}

fn sweep(common: &Common, n_grid: &Option<Vec<usize>>) -> Result<bool, Failure> {
    let mut cfg = load(common)?;
    if let Some(g) = n_grid {
        cfg.n_grid = g.clone();
    }
    cfg.experiment = Experiment::Sweep;
    cfg.validate()?;
    let rows = cmd_sweep(&cfg)?;
    let mut out = create(&cfg.out, "sweep.csv")?;
    write_sweep_csv(&rows, &mut out)?;
    let invalid = rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "{} cells, {invalid} branch-invalid, written to {}",
        rows.len(),
        cfg.out.join("sweep.csv").display()
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(common) => verify(common),
        Command::Simulate { common, mode } => simulate(common, *mode),
        Command::Sweep { common, n_grid } => sweep(common, n_grid),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
    }
}
