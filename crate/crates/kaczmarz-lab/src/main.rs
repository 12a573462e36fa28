use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kaczmarz_lab::cli::{self, CliError};
use kaczmarz_lab::experiments::{ExperimentError, ScenarioKind, ScenarioSpec};
use kaczmarz_lab::selection::SelectionStrategy;

#[derive(Parser)]
#[command(
    name = "kaczmarz-lab",
    version,
    about = "Row-action Kaczmarz solvers: compare selection strategies, \
             tabulate residual counts, and verify the exact-expectation oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario family: nice, challenging, or custom.
    #[arg(long, default_value = "nice")]
    scenario: String,
    /// Number of columns (and rows, for the square scenarios).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of rows (custom scenarios only; defaults to n).
    #[arg(long)]
    m: Option<usize>,
    /// Diagonal shift added before standardizing (nice scenarios only).
    #[arg(long, default_value_t = 100.0)]
    shift: f64,
    /// Iteration budget per strategy (default: 10000, challenging: 20000).
    #[arg(long)]
    iters: Option<usize>,
    /// Seed for the matrix; strategy i runs with seed + i.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Exponent for the weighted-p strategy.
    #[arg(long, default_value_t = 2)]
    p: u32,
    /// Output directory.
    #[arg(long, default_value = "./results")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy on one scenario and write trace CSVs, a combined
    /// comparison.csv, and optionally an SVG chart.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated strategy list.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "uniform,partial,two-sample,greedy"
        )]
        strategies: Vec<String>,
        /// Also write comparison.svg.
        #[arg(long)]
        plot: bool,
    },
    /// Tabulate the per-iteration residual counts of the partial strategy.
    Hist {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated strategy list; must include partial.
        #[arg(long, value_delimiter = ',', default_value = "partial")]
        strategies: Vec<String>,
    },
    /// Run the exact-expectation verification suite; exits 0 iff all checks
    /// pass.
    Verify,
    /// Run a scenario described by a key=value config file.
    Run {
        /// Path to the config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "./results")]
        out: PathBuf,
        /// Also write comparison.svg.
        #[arg(long)]
        plot: bool,
    },
}

fn build_spec(args: &ScenarioArgs, strategies: &[String]) -> Result<ScenarioSpec, CliError> {
    let kind = ScenarioKind::parse(&args.scenario).map_err(CliError::Experiment)?;
    let parsed: Result<Vec<SelectionStrategy>, _> = strategies
        .iter()
        .map(|name| SelectionStrategy::from_cli_name(name, args.p))
        .collect();
    let strategies = parsed.map_err(|e| CliError::Experiment(ExperimentError::Strategy(e)))?;
    let spec = ScenarioSpec {
        kind,
        m: args.m.unwrap_or(args.n),
        n: args.n,
        shift: if kind == ScenarioKind::Nice {
            args.shift
        } else {
            0.0
        },
        seed: args.seed,
        iterations: args.iters.unwrap_or_else(|| kind.default_iterations()),
        strategies,
    };
    spec.validate().map_err(CliError::Experiment)?;
    Ok(spec)
}

fn dispatch(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Compare {
            scenario,
            strategies,
            plot,
        } => {
            let spec = build_spec(&scenario, &strategies)?;
            cli::cmd_compare(&spec, &scenario.out, plot)?;
            Ok(true)
        }
        Command::Hist {
            scenario,
            strategies,
        } => {
            let spec = build_spec(&scenario, &strategies)?;
            cli::cmd_hist(&spec, &scenario.out)?;
            Ok(true)
        }
        Command::Verify => {
            let mut stdout = std::io::stdout().lock();
            let ok = cli::cmd_verify(&mut stdout)?;
            stdout.flush()?;
            Ok(ok)
        }
        Command::Run { config, out, plot } => {
            let text = std::fs::read_to_string(&config)?;
            let spec = ScenarioSpec::from_config_str(&text).map_err(CliError::Experiment)?;
            cli::cmd_compare(&spec, &out, plot)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
