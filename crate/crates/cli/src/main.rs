mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roomid_core::blind::Method;
use roomid_core::{DayWindow, ScenarioLabels};

/// Default output directory when `--out` is not given.
pub const OUT_ENV: &str = "ROOMID_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "roomid",
    version,
    about = "Simulate office CO₂ records and estimate occupancy from them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate scenario weeks and write them as CSV + JSON pairs.
    Generate(GenerateArgs),
    /// Run blind identification on each weekday of one dataset.
    Identify(IdentifyArgs),
    /// Run the methods over all six datasets and write the fit report.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Simulation parameters (TOML); defaults are used for missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Emit co2_noise identical to co2.
    #[arg(long)]
    pub no_noise: bool,
    /// Wind speed record (CSV with timestamp, wind_speed) used instead of the
    /// synthetic one.
    #[arg(long)]
    pub wind_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generate all six scenarios.
    #[arg(long, conflicts_with = "scenario")]
    pub all: bool,
    /// Scenario to generate, e.g. kth_lowc (repeatable).
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Vec<ScenarioLabels>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Dataset CSV (with its JSON sidecar next to it).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_method, default_value = "kernel")]
    pub method: Method,
    #[command(flatten)]
    pub ident: IdentArgs,
    /// Skip the SVG overlays.
    #[arg(long)]
    pub no_plots: bool,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct IdentArgs {
    /// FIR order.
    #[arg(long, default_value_t = 30)]
    pub order: usize,
    /// Daily evaluation window.
    #[arg(long, value_parser = parse_window, default_value = "09:00-18:00")]
    pub window: DayWindow,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "kernel,baseline")]
    pub methods: Vec<Method>,
    /// Simulate the datasets instead of reading them.
    #[arg(long, conflicts_with = "data")]
    pub generate: bool,
    /// Directory holding the dataset CSVs (defaults to the output directory).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Restrict to these scenarios (repeatable); all six by default.
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Vec<ScenarioLabels>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub ident: IdentArgs,
    #[command(flatten)]
    pub out: OutArg,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: roomid_core::Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<ScenarioLabels, String> {
    s.parse().map_err(|e: roomid_core::Error| {
        let names: Vec<String> = ScenarioLabels::all().iter().map(|l| l.name()).collect();
        format!("{e} (valid: {})", names.join(", "))
    })
}

fn parse_window(s: &str) -> Result<DayWindow, String> {
    DayWindow::parse_clock(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Identify(a) => commands::identify(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &roomid_core::Error) -> u8 {
    use roomid_core::Error;
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Argument(_)) {
        1
    } else {
        2
    }
}
