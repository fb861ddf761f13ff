//! Replays a finished run from its recorded sensor logs and verifies the
//! reconstruction is byte-identical.
//!
//! Usage: cargo run --example replay_logs

use std::error::Error;
use std::path::PathBuf;

use pedfuse::runner::{cmd_calibrate, cmd_replay, cmd_run, FUSION_CSV, REPLAY_FUSION_CSV};
use pedfuse::sim::ScenarioConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let scenario = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/cvfa.json");
    let mut cfg = ScenarioConfig::from_file(&scenario)?;
    cfg.duration_s = 3.0; // enough frames to exercise every stage

    let out_dir = std::env::temp_dir().join("pedfuse_replay_logs");
    let _ = std::fs::remove_dir_all(&out_dir);
    std::fs::create_dir_all(&out_dir)?;

    let (artifact, _) = cmd_calibrate(&cfg, None, &out_dir.join("calib.json"))?;
    let report = cmd_run(&cfg, &artifact, &out_dir, false)?;
    println!("recorded {} frames into {}", report.frames, out_dir.display());

    // Replay consumes only what the run wrote to disk: the raw lidar
    // stream, the per-frame camera detections and environment signal,
    // and the calibration artifact for the camera-to-lidar mapping.
    let outcome = cmd_replay(&out_dir, &artifact)?;
    println!(
        "replayed {} frames: identical = {}",
        outcome.frames, outcome.identical,
    );

    let original = std::fs::read(out_dir.join(FUSION_CSV))?;
    let replayed = std::fs::read(out_dir.join(REPLAY_FUSION_CSV))?;
    println!(
        "fusion.csv {} bytes, fusion_replay.csv {} bytes, equal = {}",
        original.len(),
        replayed.len(),
        original == replayed,
    );
    Ok(())
}
