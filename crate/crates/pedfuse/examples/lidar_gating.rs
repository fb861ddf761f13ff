//! Feeds a closing-target return stream with injected spikes through the
//! per-channel gate and prints what survives.
//!
//! Usage: cargo run --example lidar_gating

use std::error::Error;

use pedfuse::lidar::{select_cio, GateResult, LidarChannel, LidarScan, LidarTracker};

fn main() -> Result<(), Box<dyn Error>> {
    let mut tracker = LidarTracker::new();

    // Center channel tracks a target closing from 8 m at 1.8 m/s,
    // sampled at 100 Hz. Every 40th return is a half-meter spike, the
    // classic multi-path false alarm.
    let mut injected = 0usize;
    let mut rejected = Vec::new();
    let mut last_cio = None;
    for k in 0..400usize {
        let t = k as f64 * 0.01;
        let mut range = 8.0 - 1.8 * t;
        let spiked = k > 0 && k % 40 == 0;
        if spiked {
            range += 0.5;
            injected += 1;
        }
        let scan = LidarScan {
            t_s: t,
            channels: [
                LidarChannel::none(),
                LidarChannel {
                    range_m: range,
                    valid: true,
                },
                LidarChannel::none(),
            ],
        };
        let verdicts = tracker.ingest(&scan);
        if spiked && verdicts[1] == GateResult::Rejected {
            rejected.push(k);
        }
        last_cio = select_cio(&scan, &verdicts);
    }

    println!(
        "injected {injected} spikes at every 40th return; gate rejected {} of them: {:?}",
        rejected.len(),
        rejected,
    );
    if let Some(cio) = last_cio {
        println!(
            "closest in-path object after 4 s: {:.3} m (true {:.3} m)",
            cio.distance_m,
            8.0 - 1.8 * 3.99,
        );
    }

    // A genuine step is different from a spike: after ten consecutive
    // rejections the channel concludes the world changed, clears its
    // history, and re-locks on the new range.
    let mut tracker = LidarTracker::new();
    let mut relocked_at = None;
    for k in 0..60usize {
        let t = k as f64 * 0.01;
        let range = if k < 30 { 6.0 } else { 3.0 };
        let scan = LidarScan {
            t_s: t,
            channels: [
                LidarChannel { range_m: range, valid: true },
                LidarChannel::none(),
                LidarChannel::none(),
            ],
        };
        let verdicts = tracker.ingest(&scan);
        if k >= 30 && verdicts[0] == GateResult::Accepted && relocked_at.is_none() {
            relocked_at = Some(k);
        }
    }
    println!(
        "6 m -> 3 m step at return 30: channel re-locked at return {}",
        relocked_at.unwrap(),
    );
    Ok(())
}
