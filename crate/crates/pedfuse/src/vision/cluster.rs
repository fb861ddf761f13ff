//! DBSCAN clustering of 2D points.

/// Cluster assignment for one input point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterLabel {
    Noise,
    /// Cluster ids are dense and start at 0, assigned in order of the first
    /// core point discovered (scanning points in input order).
    Cluster(usize),
}

/// Plain DBSCAN. A point is a core point when at least `min_pts` points,
/// itself included, lie within `eps` (inclusive). Border points join the
/// cluster of whichever core point reaches them first during expansion;
/// points reached by no core point are noise.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<ClusterLabel> {
    let n = points.len();
    let eps2 = eps * eps;
    let neighbors_of = |i: usize| -> Vec<usize> {
        let (xi, yi) = points[i];
        (0..n)
            .filter(|&j| {
                let (xj, yj) = points[j];
                (xi - xj).powi(2) + (yi - yj).powi(2) <= eps2
            })
            .collect()
    };

    let mut labels = vec![None::<ClusterLabel>; n];
    let mut next_id = 0usize;

    for i in 0..n {
        if labels[i].is_some() {
            continue;
        }
        let seeds = neighbors_of(i);
        if seeds.len() < min_pts {
            labels[i] = Some(ClusterLabel::Noise);
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[i] = Some(ClusterLabel::Cluster(id));
        let mut queue: std::collections::VecDeque<usize> = seeds.into();
        while let Some(j) = queue.pop_front() {
            if matches!(labels[j], Some(ClusterLabel::Cluster(_))) {
                continue;
            }
            // Unvisited points join and expand if they are core points;
            // points already marked noise are claimed as border points.
            labels[j] = Some(ClusterLabel::Cluster(id));
            let nb = neighbors_of(j);
            if nb.len() >= min_pts {
                queue.extend(nb);
            }
        }
    }

    labels.into_iter().map(|l| l.unwrap()).collect()
}
