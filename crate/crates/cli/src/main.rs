mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loadside_core::ControllerMode;

#[derive(Parser)]
#[command(name = "loadside", version, about = "Load-side frequency control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ScenarioArgs {
    /// Scenario TOML file or bundled preset name
    #[arg(value_name = "SCENARIO")]
    pub positional: Option<String>,
    /// Scenario TOML file or bundled preset name
    #[arg(long, conflicts_with = "positional")]
    pub scenario: Option<String>,
    /// Integration step, s
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    /// Simulated duration, s
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Seed for every noise source
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record every N-th integration step
    #[arg(long)]
    pub stride: Option<usize>,
    /// Per-area variation CSV (t, area1..areaN) replacing the sinusoids
    #[arg(long, value_name = "PATH")]
    pub wind_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario; writes trajectory.csv and metrics.txt
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Controller override
        #[arg(long)]
        mode: Option<ControllerMode>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the same scenario under consensus, adaptive and PI control
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the exosystem against analytic sums of sinusoids
    VerifyExosystem {
        #[arg(long, default_value_t = 50)]
        profiles: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Render SVG charts from a trajectory CSV
    Report {
        /// Trajectory CSV written by `run`
        trajectory: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List bundled scenarios
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, mode, out } => commands::run(&scenario, mode, &out),
        Command::Compare { scenario, out } => commands::compare(&scenario, &out),
        Command::VerifyExosystem { profiles, seed } => commands::verify_exosystem(profiles, seed),
        Command::Report { trajectory, out } => commands::report(&trajectory, &out),
        Command::Presets => {
            for p in loadside_core::scenario::PRESETS {
                println!("{p}");
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
