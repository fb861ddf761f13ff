//! Command-line front end over the library pipeline: `calibrate` fits
//! the artifacts, `run` simulates a scenario end to end, `replay`
//! re-derives fusion output from a run's recorded sensor logs.
//!
//! Thin by design: each subcommand is argument plumbing around one
//! library call. Exits zero only when the command completed and every
//! artifact it promises was written; failures print one diagnostic line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pedfuse::runner::{cmd_calibrate, cmd_replay, cmd_run};
use pedfuse::{CalibrationArtifact, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "pedfuse", version, about = "Camera + short-range lidar pedestrian warning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the distance curve and spatial map and write the calibration artifact.
    Calibrate(CalibrateArgs),
    /// Simulate a scenario end to end, writing logs and a run report.
    Run(RunArgs),
    /// Re-run gating and fusion from a run directory's recorded logs.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Scenario JSON supplying camera geometry and pipeline parameters
    /// (defaults to the far-side crossing configuration).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// CSV of `y_px,distance_m` samples to fit instead of the built-in sweep.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Output path for the calibration artifact.
    #[arg(long, default_value = "calib.json")]
    calib: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON to simulate.
    #[arg(long)]
    scenario: PathBuf,
    /// Calibration artifact produced by `calibrate`.
    #[arg(long)]
    calib: PathBuf,
    /// Directory that receives the logs and the report.
    #[arg(long)]
    out: PathBuf,
    /// Also dump every rendered frame as a numbered PGM.
    #[arg(long)]
    dump_frames: bool,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run directory holding lidar.csv, detections.csv, env.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Calibration artifact produced by `calibrate`.
    #[arg(long)]
    calib: PathBuf,
}

fn load_calibration(path: &PathBuf) -> Result<CalibrationArtifact, String> {
    CalibrationArtifact::load(path)
        .map_err(|e| format!("calibration artifact {}: {e}", path.display()))
}

/// Writes one line to stdout, tolerating a closed pipe (`pedfuse run | head`
/// must not count as a pipeline failure).
fn emit(line: std::fmt::Arguments) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Calibrate(a) => {
            let mut cfg = match &a.scenario {
                Some(p) => ScenarioConfig::from_file(p)?,
                None => ScenarioConfig::default_for(ScenarioKind::Cvfa),
            };
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let (artifact, fit) = cmd_calibrate(&cfg, a.samples.as_deref(), &a.calib)?;
            emit(format_args!(
                "wrote {}: {} anchors, max residual {:.4} m, rmse {:.4} m",
                a.calib.display(),
                artifact.spatial_map.anchors().len(),
                fit.max_abs_residual,
                fit.rmse,
            ));
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(a) => {
            let mut cfg = ScenarioConfig::from_file(&a.scenario)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let artifact = load_calibration(&a.calib)?;
            std::fs::create_dir_all(&a.out)?;
            let report = cmd_run(&cfg, &artifact, &a.out, a.dump_frames)?;
            emit(format_args!("{}", serde_json::to_string_pretty(&report)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay(a) => {
            let artifact = load_calibration(&a.calib)?;
            let outcome = cmd_replay(&a.out, &artifact)?;
            if outcome.identical {
                emit(format_args!(
                    "replayed {} frames: fusion output identical to the recorded run",
                    outcome.frames,
                ));
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "replayed {} frames: fusion output differs from the recorded run",
                    outcome.frames,
                );
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
