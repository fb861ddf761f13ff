//! Three-beam lidar measurement model.
//!
//! The sensor fans three sectors across its horizontal field of view
//! (leftmost channel first). Each channel returns the nearest pedestrian
//! whose body overlaps its sector, provided the target sits inside the
//! sensor's detection band; otherwise the channel reports no return.
//!
//! Random draw order is part of the determinism contract: every scan
//! consumes exactly three normal deviates (channels 0, 1, 2) followed by
//! three spike booleans (channels 0, 1, 2), whether or not a channel sees
//! a target. Replaying a seed therefore reproduces a run bit for bit even
//! when visibility changes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::lidar::{LidarChannel, LidarScan};

use super::{PedKin, ScenarioConfig, WorldState};

/// Angular span of one channel's sector, degrees: [lo, hi].
pub fn sector_bounds_deg(cfg: &ScenarioConfig, channel: usize) -> (f64, f64) {
    assert!(channel < 3);
    let width = cfg.lidar.hfov_deg / 3.0;
    let center = (channel as f64 - 1.0) * width;
    (center - width / 2.0, center + width / 2.0)
}

/// Bearing interval subtended by a pedestrian at longitudinal distance
/// `d`, degrees. Positive bearings are to the right.
fn ped_bearing_interval_deg(ped: &PedKin, vehicle_x_m: f64, ped_width_m: f64) -> Option<(f64, f64)> {
    let d = ped.lon_m - vehicle_x_m;
    if d <= 0.0 {
        return None;
    }
    let lo = (ped.lat_m - ped_width_m / 2.0).atan2(d).to_degrees();
    let hi = (ped.lat_m + ped_width_m / 2.0).atan2(d).to_degrees();
    Some((lo, hi))
}

/// Simulates one scan at the world's current time.
pub fn sample_lidar<R: Rng>(world: &WorldState, cfg: &ScenarioConfig, rng: &mut R) -> LidarScan {
    let sigma = Normal::new(0.0, cfg.lidar.sigma_m).expect("validated sigma");
    let noise: [f64; 3] = [
        sigma.sample(rng),
        sigma.sample(rng),
        sigma.sample(rng),
    ];
    let spikes: [bool; 3] = [
        rng.gen_bool(cfg.spike_prob),
        rng.gen_bool(cfg.spike_prob),
        rng.gen_bool(cfg.spike_prob),
    ];

    let mut peds: Vec<&PedKin> = vec![&world.ped];
    if let Some(second) = &world.second_ped {
        peds.push(second);
    }

    let (band_lo, band_hi) = cfg.lidar.range_m;
    let mut channels = [LidarChannel::none(); 3];
    for (ch, slot) in channels.iter_mut().enumerate() {
        let (sec_lo, sec_hi) = sector_bounds_deg(cfg, ch);
        // Nearest pedestrian overlapping this sector inside the band.
        let mut best: Option<f64> = None;
        for ped in &peds {
            let d = ped.lon_m - world.vehicle_x_m;
            if !(band_lo..=band_hi).contains(&d) {
                continue;
            }
            let Some((lo, hi)) = ped_bearing_interval_deg(ped, world.vehicle_x_m, cfg.ped_size_m.0)
            else {
                continue;
            };
            if lo <= sec_hi && hi >= sec_lo && best.map_or(true, |b| d < b) {
                best = Some(d);
            }
        }
        if let Some(d) = best {
            let spike = if spikes[ch] { cfg.spike_magnitude_m } else { 0.0 };
            *slot = LidarChannel {
                range_m: (d + noise[ch] + spike).clamp(band_lo, band_hi),
                valid: true,
            };
        }
    }

    LidarScan {
        t_s: world.t_s,
        channels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_scenario, ScenarioConfig, ScenarioKind, SecondPedestrian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world_with_ped_at(cfg: &ScenarioConfig, d: f64, lat: f64) -> WorldState {
        let scn = build_scenario(cfg).unwrap();
        let mut w = scn.initial_state();
        w.ped.lon_m = w.vehicle_x_m + d;
        w.ped.lat_m = lat;
        w
    }

    #[test]
    fn sector_bounds_split_the_fov() {
        let cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        assert_eq!(sector_bounds_deg(&cfg, 0), (-13.5, -4.5));
        assert_eq!(sector_bounds_deg(&cfg, 1), (-4.5, 4.5));
        assert_eq!(sector_bounds_deg(&cfg, 2), (4.5, 13.5));
    }

    #[test]
    fn centered_target_hits_only_the_middle_channel() {
        let cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        let world = world_with_ped_at(&cfg, 5.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scan = sample_lidar(&world, &cfg, &mut rng);
        assert!(!scan.channels[0].valid);
        assert!(scan.channels[1].valid);
        assert!(!scan.channels[2].valid);
        assert!((scan.channels[1].range_m - 5.0).abs() < 0.5);
    }

    #[test]
    fn target_beyond_band_is_invisible() {
        let cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        let world = world_with_ped_at(&cfg, 15.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scan = sample_lidar(&world, &cfg, &mut rng);
        assert!(scan.channels.iter().all(|c| !c.valid));
    }

    #[test]
    fn target_off_axis_is_invisible() {
        let cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        // 20 degrees off boresight at 5 m: outside the 13.5 degree edge.
        let world = world_with_ped_at(&cfg, 5.0, 5.0 * 20f64.to_radians().tan());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scan = sample_lidar(&world, &cfg, &mut rng);
        assert!(scan.channels.iter().all(|c| !c.valid));
    }

    #[test]
    fn target_straddling_a_boundary_hits_both_sectors() {
        let cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        // Bearing interval around 4.5 degrees at 6 m.
        let lat = 6.0 * 4.5f64.to_radians().tan();
        let world = world_with_ped_at(&cfg, 6.0, lat);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scan = sample_lidar(&world, &cfg, &mut rng);
        assert!(scan.channels[1].valid);
        assert!(scan.channels[2].valid);
        assert!(!scan.channels[0].valid);
        assert!((scan.channels[1].range_m - 6.0).abs() < 0.5);
        assert!((scan.channels[2].range_m - 6.0).abs() < 0.5);
    }

    #[test]
    fn nearest_of_two_targets_wins() {
        let mut cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        cfg.second_pedestrian = Some(SecondPedestrian {
            lon_m: 0.0, // overwritten below
            start_lat_m: 0.0,
            lat_speed_mps: 0.0,
        });
        let scn = build_scenario(&cfg).unwrap();
        let mut world = scn.initial_state();
        world.ped.lon_m = world.vehicle_x_m + 9.0;
        world.ped.lat_m = 0.0;
        world.second_ped = Some(PedKin {
            lon_m: world.vehicle_x_m + 4.0,
            lat_m: 0.0,
            lat_speed_mps: 0.0,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scan = sample_lidar(&world, &cfg, &mut rng);
        assert!(scan.channels[1].valid);
        assert!((scan.channels[1].range_m - 4.0).abs() < 0.5);
    }

    #[test]
    fn draw_order_is_pinned() {
        // The scan must equal a manual reconstruction that draws three
        // normals then three booleans, regardless of which channels see
        // the target.
        let mut cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        cfg.spike_prob = 0.25;
        cfg.spike_magnitude_m = 0.7;
        let world = world_with_ped_at(&cfg, 6.0, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let scan = sample_lidar(&world, &cfg, &mut rng);

        let mut replay = ChaCha8Rng::seed_from_u64(77);
        let normal = Normal::new(0.0, cfg.lidar.sigma_m).unwrap();
        let noise: Vec<f64> = (0..3).map(|_| normal.sample(&mut replay)).collect();
        let spikes: Vec<bool> = (0..3).map(|_| replay.gen_bool(0.25)).collect();
        let spike = if spikes[1] { 0.7 } else { 0.0 };
        assert!(!scan.channels[0].valid);
        assert!(!scan.channels[2].valid);
        assert_eq!(scan.channels[1].range_m, (6.0 + noise[1] + spike).clamp(1.0, 10.0));
    }

    #[test]
    fn spiked_return_near_band_edge_clamps() {
        let mut cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        cfg.spike_prob = 1.0;
        cfg.spike_magnitude_m = 0.5;
        let world = world_with_ped_at(&cfg, 9.95, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let scan = sample_lidar(&world, &cfg, &mut rng);
            assert!(scan.channels[1].valid);
            assert!(scan.channels[1].range_m <= 10.0);
            assert!(scan.channels[1].range_m >= 1.0);
        }
    }

    #[test]
    fn same_seed_reproduces_the_scan_stream() {
        // A slow-enough crossing keeps the pedestrian inside the lidar
        // field of view while it is in the detection band.
        let mut cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        cfg.ped_speed_mps = 0.8;
        let scn = build_scenario(&cfg).unwrap();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (480..680)
                .map(|k| sample_lidar(&scn.world_at(k as f64 * 0.01), &cfg, &mut rng))
                .collect::<Vec<_>>()
        };
        let scans = run(11);
        assert!(
            scans.iter().any(|s| s.channels.iter().any(|c| c.valid)),
            "window should contain valid returns"
        );
        assert_eq!(scans, run(11));
        assert_ne!(scans, run(12));
    }

    #[test]
    fn validity_matches_geometry_predicate() {
        // Property: a channel is valid exactly when some pedestrian sits
        // in the detection band and its bearing interval overlaps the
        // sector.
        let mut cfg = ScenarioConfig::default_for(ScenarioKind::Cvfa);
        cfg.second_pedestrian = Some(SecondPedestrian {
            lon_m: 20.0,
            start_lat_m: 2.0,
            lat_speed_mps: -0.5,
        });
        let scn = build_scenario(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for k in 0..720 {
            let world = scn.world_at(k as f64 * 0.01);
            let scan = sample_lidar(&world, &cfg, &mut rng);
            for ch in 0..3 {
                let (sec_lo, sec_hi) = sector_bounds_deg(&cfg, ch);
                let mut peds = vec![world.ped];
                if let Some(s) = world.second_ped {
                    peds.push(s);
                }
                let expected = peds.iter().any(|p| {
                    let d = p.lon_m - world.vehicle_x_m;
                    if !(1.0..=10.0).contains(&d) {
                        return false;
                    }
                    let lo = (p.lat_m - 0.25).atan2(d).to_degrees();
                    let hi = (p.lat_m + 0.25).atan2(d).to_degrees();
                    lo <= sec_hi && hi >= sec_lo
                });
                assert_eq!(scan.channels[ch].valid, expected, "t={} ch={ch}", world.t_s);
            }
        }
    }
}
