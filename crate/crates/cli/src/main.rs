use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nfdist_cli::{bundled, execute, load, Experiment, RunError, RunOptions, Scenario, BUNDLED};

#[derive(Parser)]
#[command(name = "nfdist", version, about = "Near-field PA distortion scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Focal points of the distortion (focal_points.json).
    Predict(Common),
    /// Radiated linear/distortion PSD over a grid (field.csv, field.json).
    Radiate(Common),
    /// Sum rate over EVM and SNR (rates.csv).
    Rates(Common),
    /// Scheduling policies over random drops (schedule.csv, gains.csv).
    Schedule(Common),
    /// Third-order PA for a target EVM (pa.json).
    Calibrate(Common),
    /// Prediction plus radiation, matched peak by peak (validation.json).
    Validate(Common),
    /// Runs the experiment named in the scenario.
    Run(Common),
    /// Lists the bundled scenarios, or prints one.
    Scenarios { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: scenario `output`, else out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps the worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Angular step in degrees for scan axes.
    #[arg(long)]
    grid: Option<f64>,
}

fn resolve(spec: &str) -> Result<Scenario, RunError> {
    let path = PathBuf::from(spec);
    if !path.exists() {
        if let Some(text) = bundled(spec) {
            return Ok(Scenario::from_toml(text)?);
        }
    }
    load(&path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::Predict(c) => (Some(Experiment::Predict), c),
        Command::Radiate(c) => (Some(Experiment::Radiate), c),
        Command::Rates(c) => (Some(Experiment::Rates), c),
        Command::Schedule(c) => (Some(Experiment::Schedule), c),
        Command::Calibrate(c) => (Some(Experiment::Calibrate), c),
        Command::Validate(c) => (Some(Experiment::Validate), c),
        Command::Run(c) => (None, c),
        Command::Scenarios { name: None } => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Scenarios { name: Some(name) } => {
            return match bundled(&name) {
                Some(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("error: no bundled scenario `{name}`");
                    ExitCode::from(1)
                }
            };
        }
    };
    if let Some(g) = common.grid {
        if !(g > 0.0) {
            eprintln!("error: config error at `--grid`: must be positive");
            return ExitCode::from(1);
        }
    }
    let opts = RunOptions {
        seed: common.seed,
        out: common.out,
        workers: common.workers,
        grid_deg: common.grid,
    };
    let result = resolve(&common.scenario).and_then(|s| execute(&s, experiment, &opts));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("  {}", outcome.out_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
