use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hilfer_core::cli::{
    conditions_report, gronwall_table, parse_spec, run, special_table, verify_candidate, CliError, Overrides,
    ProblemSpec, SampleRange, Status, Table,
};
use hilfer_core::monotone::Side;

#[derive(Parser)]
#[command(
    name = "hilfer",
    version,
    about = "Monotone-iteration solver for impulsive Hilfer fractional evolution equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct SpecOverrides {
    /// Iteration tolerance (weighted sup norm)
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration budget for each chain
    #[arg(long)]
    max_iter: Option<usize>,
    /// Nodes per impulse interval
    #[arg(long)]
    mesh_n: Option<usize>,
    /// Mesh grading exponent (>= 1)
    #[arg(long)]
    grading: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks listed in a spec and write solution.csv and report.json
    Solve {
        /// Problem spec (TOML)
        spec: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: SpecOverrides,
    },
    /// Check whether a sampled trajectory is a lower or upper solution
    Verify {
        /// Problem spec (TOML)
        spec: PathBuf,
        /// lower or upper
        #[arg(long)]
        side: Side,
        /// Trajectory CSV sampled on the spec's mesh
        #[arg(long)]
        candidate: PathBuf,
        #[command(flatten)]
        overrides: SpecOverrides,
    },
    /// Sample the monotonicity and one-sided Lipschitz conditions
    Conditions {
        /// Problem spec (TOML)
        spec: PathBuf,
        /// Number of random sample points
        #[arg(long)]
        samples: Option<usize>,
        /// Sampling seed
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        overrides: SpecOverrides,
    },
    /// Evaluate the Mittag-Leffler-kernel Gronwall bound for sampled forcing
    Gronwall {
        /// CSV with columns t,a
        #[arg(long)]
        a: PathBuf,
        /// Kernel coefficient (>= 0)
        #[arg(long)]
        b: f64,
        /// Kernel order (> 0)
        #[arg(long)]
        beta: f64,
    },
    /// Tabulate Mittag-Leffler functions or the Wright-type density
    Special {
        /// ml or xi
        #[arg(long)]
        table: Table,
        /// Order in (0, 1)
        #[arg(long)]
        mu: f64,
        /// start:end:points
        #[arg(long, allow_hyphen_values = true)]
        range: SampleRange,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load(path: &Path, o: &SpecOverrides, samples: Option<usize>, seed: Option<u64>) -> Result<ProblemSpec, CliError> {
    let overrides = Overrides { tol: o.tol, max_iter: o.max_iter, mesh_n: o.mesh_n, grading: o.grading, samples, seed };
    let spec = parse_spec(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(spec.with_overrides(&overrides)?)
}

fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Io { path: PathBuf::from("<stdout>"), source: e })
        }
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    emit(&(serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))? + "\n"))
}

fn execute(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::Solve { spec, out, overrides } => {
            let spec = load(&spec, &overrides, None, None)?;
            let report = run(&spec, &out)?;
            for m in &report.messages {
                eprintln!("{m}");
            }
            Ok(report.status)
        }
        Command::Verify { spec, side, candidate, overrides } => {
            let spec = load(&spec, &overrides, None, None)?;
            let check = verify_candidate(&spec, side, &read(&candidate)?)?;
            print_json(&check)?;
            Ok(if check.passes { Status::Ok } else { Status::ConditionFailure })
        }
        Command::Conditions { spec, samples, seed, overrides } => {
            let spec = load(&spec, &overrides, samples, seed)?;
            let rep = conditions_report(&spec)?;
            print_json(&rep)?;
            Ok(if rep.all_hold() { Status::Ok } else { Status::ConditionFailure })
        }
        Command::Gronwall { a, b, beta } => {
            emit(&gronwall_table(&read(&a)?, b, beta)?)?;
            Ok(Status::Ok)
        }
        Command::Special { table, mu, range } => {
            emit(&special_table(table, mu, &range)?)?;
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
