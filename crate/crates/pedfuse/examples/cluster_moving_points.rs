//! Groups scattered moving points into object clusters with DBSCAN and
//! shows how sparse stragglers become noise.
//!
//! Usage: cargo run --example cluster_moving_points

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use pedfuse::vision::{dbscan, ClusterLabel};

fn main() {
    let mut rng = StdRng::seed_from_u64(7);

    // Two tight blobs of tracked corners plus a few isolated returns.
    let mut points: Vec<(f64, f64)> = Vec::new();
    for _ in 0..12 {
        points.push((120.0 + rng.gen::<f64>() * 18.0, 300.0 + rng.gen::<f64>() * 40.0));
    }
    for _ in 0..9 {
        points.push((420.0 + rng.gen::<f64>() * 14.0, 280.0 + rng.gen::<f64>() * 30.0));
    }
    points.push((260.0, 150.0));
    points.push((580.0, 440.0));
    points.push((30.0, 60.0));

    let labels = dbscan(&points, 25.0, 4);

    let mut clusters: std::collections::BTreeMap<usize, Vec<(f64, f64)>> = Default::default();
    let mut noise = 0;
    for (p, label) in points.iter().zip(&labels) {
        match label {
            ClusterLabel::Cluster(id) => clusters.entry(*id).or_default().push(*p),
            ClusterLabel::Noise => noise += 1,
        }
    }

    println!(
        "{} points -> {} clusters, {noise} noise points",
        points.len(),
        clusters.len(),
    );
    for (id, members) in &clusters {
        let n = members.len() as f64;
        let cx = members.iter().map(|p| p.0).sum::<f64>() / n;
        let cy = members.iter().map(|p| p.1).sum::<f64>() / n;
        let bottom = members.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        println!(
            "  cluster {id}: {} points, center ({cx:.0}, {cy:.0}), bottom row {bottom:.1}",
            members.len(),
        );
    }
    println!("(a cluster's bottom row is what the distance lookup consumes)");
}
