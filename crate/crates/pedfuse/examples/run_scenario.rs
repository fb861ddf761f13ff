//! Runs one crossing scenario end to end: calibrate, simulate, fuse,
//! score. Prints the fit quality and the run report.
//!
//! Usage: cargo run --example run_scenario [-- <scenario.json> [out_dir]]
//!
//! With no arguments it runs the bundled far-side crossing and writes its
//! logs to a temporary directory.

use std::error::Error;
use std::path::PathBuf;
use std::time::Instant;

use pedfuse::runner::{cmd_calibrate, cmd_run};
use pedfuse::sim::ScenarioConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let scenario_path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/cvfa.json")
    });
    let out_dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pedfuse_run_scenario"));
    std::fs::create_dir_all(&out_dir)?;

    let cfg = ScenarioConfig::from_file(&scenario_path)?;
    println!(
        "scenario {} from {}",
        cfg.kind.as_str(),
        scenario_path.display()
    );

    // Calibrate under the same configuration the run will use: the
    // spatial map measures the detection pipeline, so the pipeline
    // parameters must match.
    let calib_path = out_dir.join("calib.json");
    let t0 = Instant::now();
    let (artifact, fit) = cmd_calibrate(&cfg, None, &calib_path)?;
    println!(
        "calibrated in {:.2?}: max residual {:.4} m, rmse {:.4} m, {} map anchors",
        t0.elapsed(),
        fit.max_abs_residual,
        fit.rmse,
        artifact.spatial_map.anchors().len()
    );

    let t0 = Instant::now();
    let report = cmd_run(&cfg, &artifact, &out_dir, false)?;
    println!("ran {} frames in {:.2?}", report.frames, t0.elapsed());
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("logs in {}", out_dir.display());
    Ok(())
}
