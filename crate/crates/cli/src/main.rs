//! `opf`: tap-optimizing optimal power flow for radial feeders.
//!
//! Exit status: 0 success, 1 infeasible, 2 input error, 3 solver failure.

mod commands;
mod config;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tapflow::linearization::ApproxVariant;
use tapflow::solver::SolverMode;

use commands::{exit_for, Exit, GridChoice, ModelChoice, Sink};
use config::{ConfigFile, SolverOverrides};

#[derive(Parser, Debug)]
#[command(name = "opf", version, about = "Optimal power flow with on-load tap changer optimization")]
struct Cli {
    /// TOML configuration file. Command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(flatten)]
    solver: SolverArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct SolverArgs {
    #[arg(long, global = true)]
    rel_gap: Option<f64>,
    #[arg(long, global = true)]
    socp_tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    node_limit: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Ipm,
    Splitting,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ApproxArg {
    FirstOrder,
    Literal,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Uniform ratio step applied to every transformer, e.g. 0.005.
    #[arg(long, conflicts_with = "k")]
    dt: Option<String>,
    /// Uniform number of tap steps applied to every transformer.
    #[arg(long)]
    k: Option<u32>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Use the approximate tap model instead of the exact one.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "first-order", conflicts_with = "fixed")]
    approx: Option<ApproxArg>,
    /// Fix the tap positions, one per transformer, e.g. 1,2,2,1.
    #[arg(long, value_delimiter = ',')]
    fixed: Option<Vec<u32>>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Print the machine-readable JSON document instead of the table.
    #[arg(long)]
    json: bool,
    /// Also write the JSON and text reports into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the tap-optimizing OPF.
    Run {
        #[arg(long)]
        case: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Include wall-clock time in the report.
        #[arg(long)]
        timing: bool,
    },
    /// Power flow at fixed tap positions.
    Pf {
        #[arg(long)]
        case: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Tap position per transformer, e.g. 1,2,2,1.
        #[arg(long, value_delimiter = ',', required = true)]
        taps: Vec<u32>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate every tap combination with the power flow.
    Enumerate {
        #[arg(long)]
        case: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// List every grid point instead of the ten best.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print the linearization rows of one transformer.
    LinAudit {
        #[arg(long)]
        case: PathBuf,
        /// Transformer as <from bus>-<to bus>.
        #[arg(long)]
        branch: String,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print the mixed-integer conic program as text.
    DumpModel {
        #[arg(long)]
        case: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the tap-grid scenario battery on a case.
    Scenarios {
        #[arg(long)]
        case: PathBuf,
        /// Comma-separated subset of scenario names.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
        /// Include wall-clock times in the report.
        #[arg(long)]
        timing: bool,
    },
}

impl From<&GridArgs> for GridChoice {
    fn from(g: &GridArgs) -> Self {
        GridChoice { dt: g.dt.clone(), k: g.k }
    }
}

impl From<&ModelArgs> for ModelChoice {
    fn from(m: &ModelArgs) -> Self {
        let approx = m.approx.map(|a| match a {
            ApproxArg::FirstOrder => ApproxVariant::FirstOrder,
            ApproxArg::Literal => ApproxVariant::Literal,
        });
        ModelChoice { approx, fixed: m.fixed.clone() }
    }
}

impl From<&OutputArgs> for Sink {
    fn from(o: &OutputArgs) -> Self {
        Sink { json: o.json, out: o.out.clone() }
    }
}

fn overrides(s: &SolverArgs) -> SolverOverrides {
    SolverOverrides {
        rel_gap: s.rel_gap,
        socp_tol: s.socp_tol,
        max_iter: s.max_iter,
        node_limit: s.node_limit,
        threads: s.threads,
        mode: s.mode.map(|m| match m {
            ModeArg::Ipm => SolverMode::Ipm,
            ModeArg::Splitting => SolverMode::Splitting,
        }),
    }
}

fn execute(cli: &Cli) -> tapflow::Result<Exit> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let cfg = file.resolve(&overrides(&cli.solver))?;
    match &cli.command {
        Command::Run { case, grid, model, output, timing } => {
            commands::run(case, &grid.into(), &model.into(), &cfg, &output.into(), *timing)
        }
        Command::Pf { case, grid, taps, output } => commands::pf(case, &grid.into(), taps, &cfg, &output.into()),
        Command::Enumerate { case, grid, all, output } => {
            commands::enumerate(case, &grid.into(), &cfg, &output.into(), *all)
        }
        Command::LinAudit { case, branch, grid, model } => {
            commands::lin_audit(case, &grid.into(), &model.into(), branch, &cfg)
        }
        Command::DumpModel { case, grid, model, out } => {
            commands::dump_model(case, &grid.into(), &model.into(), &cfg, out.as_deref().map(Path::new))
        }
        Command::Scenarios { case, only, output, timing } => {
            commands::scenarios(case, only, &cfg, &output.into(), *timing)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("opf: {e}");
            exit_for(&e)
        }
    };
    ExitCode::from(code as u8)
}
