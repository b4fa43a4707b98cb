use std::path::PathBuf;
use std::process::ExitCode;

use approach_cli::commands::{self, CheckKind};
use approach_cli::output::OutDir;
use approach_cli::problem::Problem;
use approach_cli::{CliError, Status};
use clap::{Parser, Subcommand};

/// Solve and check approach differential games on time-sliced grids.
///
/// Exit codes: 0 ok, 1 check failed, 2 input error, 3 no fixed point,
/// 4 commutation hypothesis violated. Set RAYON_NUM_THREADS to bound
/// parallelism and RUST_LOG for progress logging.
#[derive(Debug, Parser)]
#[command(name = "approach", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the programmed iteration to its fixed point.
    Solve {
        problem: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Iterate the original and the transformed game side by side and
    /// compare the iterates.
    TransformCompare {
        problem: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Compare even if the flows of f and g fail to commute.
        #[arg(long)]
        force: bool,
    },
    /// Check one hypothesis or property.
    Check {
        problem: PathBuf,
        #[arg(long, value_enum)]
        which: CheckKind,
        /// Exported grid for the sections check.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Extremal-shift trials against a computed bridge.
    Simulate {
        problem: PathBuf,
        #[arg(long)]
        bridge: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the motions of the first N trials.
        #[arg(long, default_value_t = 0)]
        trajectories: usize,
    },
    /// Boundary cells of a grid as CSV, for external plotting.
    ExportPlot {
        grid: PathBuf,
        /// Slice index; all slices if omitted.
        #[arg(long)]
        slice: Option<usize>,
        /// Output file; stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::Solve { problem, out } => commands::solve(&Problem::load(&problem)?, &OutDir::create(&out)?),
        Command::TransformCompare { problem, out, force } => {
            commands::transform_compare(&Problem::load(&problem)?, &OutDir::create(&out)?, force)
        }
        Command::Check { problem, which, grid, out } => {
            let problem = Problem::load(&problem)?;
            let out = out.as_deref().map(OutDir::create).transpose()?;
            commands::check(&problem, which, grid.as_deref(), out.as_ref())
        }
        Command::Simulate { problem, bridge, out, trajectories } => {
            commands::simulate(&Problem::load(&problem)?, &bridge, &OutDir::create(&out)?, trajectories)
        }
        Command::ExportPlot { grid, slice, out } => commands::export_plot(&grid, slice, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
