//! Walks the sensor-arbitration policy case by case: band handover,
//! single-sensor operation, the darkness override, fallback persistence,
//! and the warning ladder.
//!
//! Usage: cargo run --example fusion_policy

use pedfuse::fusion::{fuse, EnvSignal, FusionParams, FusionState};
use pedfuse::lidar::{Detection, Source};

fn det(t_s: f64, distance_m: f64, source: Source) -> Detection {
    Detection {
        t_s,
        distance_m,
        source,
        lateral_px: None,
    }
}

fn main() {
    let params = FusionParams::default();
    let day = EnvSignal {
        mean_intensity: 120.0,
        corner_count: 40,
    };
    let night = EnvSignal {
        mean_intensity: 4.0,
        corner_count: 2,
    };

    println!("both sensors, daylight:");
    for (lidar, camera) in [(3.0, 5.0), (8.9, 9.5), (9.0, 9.5), (12.0, 9.5)] {
        let mut state = FusionState::default();
        let out = fuse(
            Some(&det(0.0, lidar, Source::Lidar)),
            Some(&det(0.0, camera, Source::Camera)),
            &day,
            &params,
            &mut state,
            0.0,
        );
        println!(
            "  lidar {lidar:>4.1} camera {camera:>4.1} -> main {:<7} fused {:>4.1} warning {:?}",
            format!("{:?}", out.main_sensor).to_lowercase(),
            out.distance_m.unwrap(),
            out.warning,
        );
    }

    println!("one sensor, daylight:");
    let mut state = FusionState::default();
    let out = fuse(Some(&det(0.0, 12.0, Source::Lidar)), None, &day, &params, &mut state, 0.0);
    println!("  lidar only 12.0 -> main {:?}, fused {:?}", out.main_sensor, out.distance_m);
    let mut state = FusionState::default();
    let out = fuse(None, Some(&det(0.0, 14.0, Source::Camera)), &day, &params, &mut state, 0.0);
    println!("  camera only 14.0 -> main {:?}, fused {:?}", out.main_sensor, out.distance_m);

    println!("darkness override (camera reading discarded):");
    let mut state = FusionState::default();
    let out = fuse(
        Some(&det(0.0, 9.5, Source::Lidar)),
        Some(&det(0.0, 9.2, Source::Camera)),
        &night,
        &params,
        &mut state,
        0.0,
    );
    println!("  lidar 9.5 camera 9.2 at night -> main {:?}, fused {:?}", out.main_sensor, out.distance_m);

    println!("fallback persistence after a dropout:");
    let mut state = FusionState::default();
    fuse(Some(&det(0.00, 5.0, Source::Lidar)), None, &day, &params, &mut state, 0.00);
    fuse(Some(&det(0.20, 7.0, Source::Lidar)), None, &day, &params, &mut state, 0.20);
    let out = fuse(None, None, &day, &params, &mut state, 0.40);
    println!(
        "  5.0 @ 0.0 s, 7.0 @ 0.2 s, dropout @ 0.4 s -> main {:?}, fused {:?}",
        out.main_sensor, out.distance_m,
    );
    let out = fuse(None, None, &day, &params, &mut state, 2.00);
    println!(
        "  dropout @ 2.0 s (window expired)         -> main {:?}, fused {:?}",
        out.main_sensor, out.distance_m,
    );
}
