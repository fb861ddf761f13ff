//! Fits the pixel-row-to-distance polynomial from a simulated
//! calibration sweep and shows the fit quality, a few lookups, and the
//! artifact round trip.
//!
//! Usage: cargo run --example fit_distance_curve

use std::error::Error;

use pedfuse::calib::{fit_distance_poly, CalibrationArtifact, SpatialMap};
use pedfuse::runner::sweep_distances;
use pedfuse::sim::{ped_bottom_row, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);

    // One sample per sweep station: where the target's ground contact
    // lands in the image, and how far away it really was.
    let samples: Vec<(f64, f64)> = sweep_distances(53)
        .into_iter()
        .map(|d| (ped_bottom_row(&cfg, d), d))
        .collect();
    println!(
        "sweep: {} stations, rows {:.1}..{:.1}",
        samples.len(),
        samples.last().unwrap().0,
        samples[0].0,
    );

    let (poly, fit) = fit_distance_poly(&samples)?;
    println!(
        "fit: max residual {:.4} m, rmse {:.4} m",
        fit.max_abs_residual, fit.rmse
    );

    for d in [2.5, 5.0, 9.0, 15.0, 19.5] {
        let row = ped_bottom_row(&cfg, d);
        let back = poly.eval_distance(row)?;
        println!("  {d:>4.1} m -> row {row:7.2} -> {back:.3} m");
    }

    // Rows outside the calibrated band are an error, not a guess.
    let err = poly.eval_distance(100.0).unwrap_err();
    println!("row 100.0 -> {err}");

    let artifact = CalibrationArtifact {
        poly,
        spatial_map: SpatialMap::build(&[(2.0, 2.0), (10.0, 10.0)])?,
    };
    let dir = std::env::temp_dir().join("pedfuse_fit_distance_curve");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("calib.json");
    artifact.save(&path)?;
    let reloaded = CalibrationArtifact::load(&path)?;
    println!(
        "artifact round trip: eval(300) {:.6} == {:.6}",
        artifact.poly.eval_distance(300.0)?,
        reloaded.poly.eval_distance(300.0)?,
    );
    Ok(())
}
