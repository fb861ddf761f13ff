//! Spatial and temporal alignment between the two sensors: mapping
//! camera distances into the lidar range frame through measured anchors,
//! and pairing each camera frame with the freshest lidar scan.
//!
//! Usage: cargo run --example sensor_alignment

use std::error::Error;

use pedfuse::calib::{SpatialMap, TriggerClock};
use pedfuse::lidar::{LidarChannel, LidarScan};

fn main() -> Result<(), Box<dyn Error>> {
    // Anchors as a calibration pass would measure them: the camera reads
    // slightly long at every station.
    let anchors: Vec<(f64, f64)> = (2..=10)
        .map(|s| {
            let lidar = s as f64;
            (lidar + 0.02 + 0.006 * lidar, lidar)
        })
        .collect();
    let map = SpatialMap::build(&anchors)?;

    println!("camera -> lidar frame:");
    for cam in [2.5, 6.0, 9.97, 12.0, 19.5] {
        println!("  {:>5.2} m -> {:.3} m", cam, map.align_camera_to_lidar(cam));
    }
    println!("(values past the last anchor extend the final segment's slope)");

    // A 100 Hz scan stream against a 30 fps frame clock: each frame takes
    // the latest scan at or before its timestamp, never a future one.
    let scans: Vec<LidarScan> = (0..12)
        .map(|k| LidarScan {
            t_s: k as f64 * 0.01,
            channels: [LidarChannel::none(); 3],
        })
        .collect();
    let mut clock = TriggerClock::new(30.0);
    println!("frame pairing against a 100 Hz stream:");
    for frame in 0..3 {
        let t = frame as f64 / 30.0;
        let scan = clock.align_lidar_to_frame(t, &scans)?;
        println!("  frame at {t:.4} s -> scan at {:.2} s", scan.t_s);
    }

    // Before the first scan exists there is nothing valid to pair with.
    let mut early = TriggerClock::new(30.0);
    let err = early.align_lidar_to_frame(0.005, &scans[3..]).unwrap_err();
    println!("frame before the first scan -> {err}");
    Ok(())
}
