use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use epibeds::io::parse_tau_grid;
use epibeds::SeedConvention;
use epibeds_cli::{problem_kind, run_allocate, run_fit, run_simulate, run_sweep, LoadedScenario, Summary};

#[derive(Parser)]
#[command(
    name = "epibeds",
    version,
    about = "Epidemic simulation, fitting and hospital bed allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override how the seed fills days before the start.
    #[arg(long, value_enum)]
    seed_convention: Option<Convention>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Constant,
    Pulse,
    Window,
}

impl From<Convention> for SeedConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Constant => SeedConvention::Constant,
            Convention::Pulse => SeedConvention::Pulse,
            Convention::Window => SeedConvention::Window,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every region and write daily series.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit alpha, beta and the isolation-time schedule to observed data.
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV with `date,cases,deaths` (cumulative counts).
        #[arg(long)]
        data: PathBuf,
    },
    /// Split new bed tranches between regions.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// 1: capacity only, 2: capacity and daily cost.
        #[arg(long, default_value_t = 1)]
        problem: u8,
    },
    /// Allocate for every combination of planning-window isolation times.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Isolation times to try, e.g. `3,4,5` or `3..5`.
        #[arg(long)]
        tau_grid: String,
    },
}

fn print(summary: &Summary) {
    let mut out = std::io::stdout().lock();
    for (k, v) in &summary.0 {
        // a closed pipe (e.g. `| head`) is not an error worth reporting
        if writeln!(out, "{k} = {v}").is_err() {
            return;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let load = |c: &Common| LoadedScenario::load(&c.scenario, c.seed_convention.map(Into::into));
    match cli.command {
        Command::Simulate { common } => print(&run_simulate(&load(&common)?, &common.out)?),
        Command::Fit { common, data } => {
            let report = run_fit(&load(&common)?, &data, &common.out)?;
            for w in &report.table.warnings {
                eprintln!("warning: {w}");
            }
            print(&report.summary);
        }
        Command::Allocate { common, problem } => {
            let kind = problem_kind(problem)?;
            print(&run_allocate(&load(&common)?, kind, &common.out)?.1);
        }
        Command::Sweep { common, tau_grid } => {
            let grid = parse_tau_grid(&tau_grid)?;
            print(&run_sweep(&load(&common)?, &grid, &common.out)?.1);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
