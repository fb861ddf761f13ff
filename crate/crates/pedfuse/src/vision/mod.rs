//! Camera-side pedestrian detection.
//!
//! The pipeline mirrors a classical motion-based detector: restrict the
//! frame to a road-shaped region of interest, keep bright pixels, find
//! Shi-Tomasi corners, track them with pyramidal Lucas-Kanade flow, cluster
//! the corners that actually moved with DBSCAN, and convert each cluster's
//! bottom row to a distance through the calibrated pixel-to-distance
//! polynomial. A small per-target tracker gates the resulting distances so
//! a single bad frame cannot produce a false alarm.

pub mod cluster;
pub mod corners;
pub mod flow;
pub mod pgm;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{CalibError, DistancePoly};
use crate::lidar::{ChannelHistory, Detection, GateResult, Source};

pub use cluster::{dbscan, ClusterLabel};
pub use corners::{score_map, shi_tomasi, Corner};
pub use flow::{lk_flow, FlowStatus, FlowVector};
pub use pgm::{read_pgm, write_pgm};

/// Number of consecutive frames a target may go unmatched before its
/// track is dropped. Mirrors the gate's clear-after-10 rule.
pub const TARGET_MAX_MISSES: u32 = 10;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("degenerate roi polygon: {what}")]
    DegeneratePolygon { what: String },
    #[error("dimension mismatch in {what}: {a:?} vs {b:?}")]
    DimensionMismatch {
        what: String,
        a: (u32, u32),
        b: (u32, u32),
    },
    #[error("{path}: {what}")]
    Pgm { path: String, what: String },
    #[error("{path}:{line}: {what}")]
    Schema {
        path: String,
        line: usize,
        what: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One 8-bit grayscale frame, row-major, with its capture timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub t_s: f64,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, t_s: f64) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![0; width as usize * height as usize],
            t_s,
        }
    }

    pub fn filled(width: u32, height: u32, value: u8, t_s: f64) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
            t_s,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[(y * self.width + x) as usize] = value;
    }

    /// Mean pixel intensity over the whole frame, the ambient-light proxy
    /// used by the fusion stage.
    pub fn mean_intensity(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.pixels.iter().map(|&p| p as u64).sum();
        sum as f64 / self.pixels.len() as f64
    }
}

/// A rasterized four-vertex region of interest.
#[derive(Debug, Clone)]
pub struct RoiMask {
    pub width: u32,
    pub height: u32,
    /// Trapezoid vertices: far-left, far-right, near-right, near-left.
    pub polygon: [(f64, f64); 4],
    inside: Vec<bool>,
}

impl RoiMask {
    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.inside[(y * self.width + x) as usize]
    }

    /// A mask covering the whole frame. Useful for tests and for running
    /// the detector without a road prior.
    pub fn full(width: u32, height: u32) -> Self {
        let w = width as f64 - 1.0;
        let h = height as f64 - 1.0;
        RoiMask {
            width,
            height,
            polygon: [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)],
            inside: vec![true; width as usize * height as usize],
        }
    }
}

/// Builds the road trapezoid: two far vertices straddling `far_point` by
/// `half_width_px`, plus the two near lane points as the bottom edge. The
/// mask includes every pixel whose center lies inside or on the polygon.
pub fn compute_roi(
    width: u32,
    height: u32,
    far_point: (f64, f64),
    near_lane_points: [(f64, f64); 2],
    half_width_px: f64,
) -> Result<RoiMask, VisionError> {
    let degenerate = |what: &str| VisionError::DegeneratePolygon {
        what: what.to_string(),
    };
    let all = [far_point, near_lane_points[0], near_lane_points[1]];
    if all.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) || !half_width_px.is_finite() {
        return Err(degenerate("non-finite vertex"));
    }
    if half_width_px <= 0.0 {
        return Err(degenerate("half width must be positive"));
    }
    if near_lane_points[0] == near_lane_points[1] {
        return Err(degenerate("near points coincide"));
    }
    let (near_left, near_right) = if near_lane_points[0].0 <= near_lane_points[1].0 {
        (near_lane_points[0], near_lane_points[1])
    } else {
        (near_lane_points[1], near_lane_points[0])
    };
    if near_left.0 == near_right.0 {
        return Err(degenerate("near points form a vertical segment"));
    }
    if far_point.1 >= near_left.1 || far_point.1 >= near_right.1 {
        return Err(degenerate("far point must lie above the near points"));
    }

    let polygon = [
        (far_point.0 - half_width_px, far_point.1),
        (far_point.0 + half_width_px, far_point.1),
        near_right,
        near_left,
    ];

    let mut inside = vec![false; width as usize * height as usize];
    for y in 0..height {
        for x in 0..width {
            let px = x as f64;
            let py = y as f64;
            let mut pos = false;
            let mut neg = false;
            for k in 0..4 {
                let a = polygon[k];
                let b = polygon[(k + 1) % 4];
                let cross = (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0);
                if cross > 0.0 {
                    pos = true;
                } else if cross < 0.0 {
                    neg = true;
                }
            }
            inside[(y * width + x) as usize] = !(pos && neg);
        }
    }
    Ok(RoiMask {
        width,
        height,
        polygon,
        inside,
    })
}

/// Keeps pixels that are inside the mask and at least as bright as
/// `threshold`; everything else becomes 0. Kept pixels retain their
/// original intensity so gradients stay meaningful downstream.
///
/// The mask must have the frame's dimensions.
pub fn mask_threshold(frame: &GrayFrame, mask: &RoiMask, threshold: u8) -> GrayFrame {
    assert_eq!(
        (frame.width, frame.height),
        (mask.width, mask.height),
        "mask dimensions must match the frame"
    );
    let mut out = GrayFrame::new(frame.width, frame.height, frame.t_s);
    for (i, (&p, &keep)) in frame.pixels.iter().zip(mask.inside.iter()).enumerate() {
        out.pixels[i] = if keep && p >= threshold { p } else { 0 };
    }
    out
}

/// Tunable camera pipeline parameters. All fields have conventional
/// defaults and can be overridden from scenario configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraParams {
    /// Keep-bright intensity threshold applied inside the ROI.
    pub threshold: u8,
    pub max_corners: usize,
    /// Corner quality as a fraction of the strongest score in the frame.
    pub quality: f64,
    pub min_corner_dist_px: f64,
    pub lk_window_px: usize,
    pub lk_pyramid_levels: usize,
    /// Minimum flow magnitude for a corner to count as moving.
    pub motion_threshold_px: f64,
    pub dbscan_eps_px: f64,
    pub dbscan_min_pts: usize,
    /// Association radius between a cluster center and a known target.
    pub assoc_radius_px: f64,
    /// Detection standard deviation used by the per-target gate.
    pub sigma_m: f64,
    pub max_targets: usize,
    /// Subpixel refinement added to the cluster bottom row before the
    /// distance lookup. Zero uses the bottom corner row as-is.
    pub bottom_edge_offset_px: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        CameraParams {
            threshold: 60,
            max_corners: 300,
            quality: 0.02,
            min_corner_dist_px: 5.0,
            lk_window_px: 11,
            lk_pyramid_levels: 2,
            motion_threshold_px: 1.0,
            dbscan_eps_px: 15.0,
            dbscan_min_pts: 4,
            assoc_radius_px: 40.0,
            sigma_m: 0.20,
            max_targets: 5,
            bottom_edge_offset_px: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct TargetTrack {
    center: (f64, f64),
    history: ChannelHistory,
    misses: u32,
}

/// Cross-frame tracking state: one gated distance window per target,
/// associated by bounding-box center.
#[derive(Debug, Clone, Default)]
pub struct CameraTrackState {
    targets: Vec<TargetTrack>,
}

impl CameraTrackState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    pub fn clear(&mut self) {
        self.targets.clear();
    }
}

/// Everything one frame pair produces, including the corner count the
/// fusion stage uses as its camera-health signal.
#[derive(Debug, Clone)]
pub struct FrameDetections {
    /// Gated detections, nearest first, at most `max_targets`.
    pub detections: Vec<Detection>,
    /// Corners found in the masked earlier frame.
    pub corner_count: usize,
    /// Tracked corners whose flow exceeded the motion threshold.
    pub moving_points: usize,
}

struct ClusterCandidate {
    distance_m: f64,
    x_min: f64,
    x_max: f64,
    center: (f64, f64),
}

/// Runs the full camera detection pipeline on one frame pair.
///
/// Clusters whose bottom row falls outside the polynomial's calibrated
/// range are dropped individually; they do not fail the frame. Detections
/// carry the timestamp of `next` and come out nearest first.
pub fn camera_detect(
    prev: &GrayFrame,
    next: &GrayFrame,
    mask: &RoiMask,
    poly: &DistancePoly,
    params: &CameraParams,
    state: &mut CameraTrackState,
) -> Result<FrameDetections, VisionError> {
    for (what, frame) in [("camera_detect prev", prev), ("camera_detect next", next)] {
        if (frame.width, frame.height) != (mask.width, mask.height) {
            return Err(VisionError::DimensionMismatch {
                what: what.to_string(),
                a: (frame.width, frame.height),
                b: (mask.width, mask.height),
            });
        }
    }

    let masked_prev = mask_threshold(prev, mask, params.threshold);
    let masked_next = mask_threshold(next, mask, params.threshold);

    let corners = shi_tomasi(
        &masked_prev,
        params.max_corners,
        params.quality,
        params.min_corner_dist_px,
    );
    let flows = lk_flow(
        &masked_prev,
        &masked_next,
        &corners,
        params.lk_window_px,
        params.lk_pyramid_levels,
    )?;

    let moved: Vec<(f64, f64)> = flows
        .iter()
        .filter(|f| f.status == FlowStatus::Tracked && f.magnitude() >= params.motion_threshold_px)
        .map(|f| f.to)
        .collect();

    let labels = dbscan(&moved, params.dbscan_eps_px, params.dbscan_min_pts);
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        if let ClusterLabel::Cluster(id) = label {
            clusters.entry(*id).or_default().push(i);
        }
    }

    let mut candidates: Vec<ClusterCandidate> = Vec::new();
    for members in clusters.values() {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for &i in members {
            let (x, y) = moved[i];
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        let bottom_row = y_max + params.bottom_edge_offset_px;
        match poly.eval_distance(bottom_row) {
            Ok(d) => candidates.push(ClusterCandidate {
                distance_m: d,
                x_min,
                x_max,
                center: ((x_min + x_max) / 2.0, (y_min + y_max) / 2.0),
            }),
            // A cluster outside the calibrated band (horizon clutter, or
            // something closer than the nearest calibration station) is
            // not a usable measurement; skip it.
            Err(CalibError::OutOfCalibratedRange { .. }) => continue,
            Err(_) => continue,
        }
    }
    candidates.sort_by(|a, b| a.distance_m.partial_cmp(&b.distance_m).unwrap());

    let t_s = next.t_s;
    let mut matched = vec![false; state.targets.len()];
    let mut created: Vec<TargetTrack> = Vec::new();
    let mut detections: Vec<Detection> = Vec::new();

    for cand in &candidates {
        let mut best: Option<(usize, f64)> = None;
        for (i, target) in state.targets.iter().enumerate() {
            if matched[i] {
                continue;
            }
            let d = ((target.center.0 - cand.center.0).powi(2)
                + (target.center.1 - cand.center.1).powi(2))
            .sqrt();
            if d <= params.assoc_radius_px && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let verdict = match best {
            Some((i, _)) => {
                matched[i] = true;
                let target = &mut state.targets[i];
                target.center = cand.center;
                target.misses = 0;
                target.history.gate_with_sigma(t_s, cand.distance_m, params.sigma_m)
            }
            None => {
                if state.targets.len() + created.len() >= params.max_targets {
                    continue;
                }
                let mut history = ChannelHistory::new();
                let verdict = history.gate_with_sigma(t_s, cand.distance_m, params.sigma_m);
                created.push(TargetTrack {
                    center: cand.center,
                    history,
                    misses: 0,
                });
                verdict
            }
        };
        if verdict == GateResult::Accepted && detections.len() < params.max_targets {
            detections.push(Detection {
                t_s,
                distance_m: cand.distance_m,
                source: Source::Camera,
                lateral_px: Some((cand.x_min, cand.x_max)),
            });
        }
    }

    for (i, target) in state.targets.iter_mut().enumerate() {
        if !matched[i] {
            target.misses += 1;
        }
    }
    state.targets.extend(created);
    state.targets.retain(|t| t.misses < TARGET_MAX_MISSES);

    Ok(FrameDetections {
        detections,
        corner_count: corners.len(),
        moving_points: moved.len(),
    })
}

/// The camera-side closest object: minimum distance, first by input order
/// on ties, `None` for an empty list.
pub fn select_cio_camera(dets: &[Detection]) -> Option<Detection> {
    let mut best: Option<&Detection> = None;
    for d in dets {
        match best {
            Some(b) if d.distance_m >= b.distance_m => {}
            _ => best = Some(d),
        }
    }
    best.cloned()
}

pub const DETECTIONS_HEADER: &str = "t_s,source,distance_m,x_min,x_max";

/// Streaming CSV writer for detection logs.
pub struct DetectionCsvWriter {
    out: BufWriter<fs::File>,
}

impl DetectionCsvWriter {
    pub fn create(path: &Path) -> Result<Self, VisionError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{DETECTIONS_HEADER}")?;
        Ok(DetectionCsvWriter { out })
    }

    pub fn write_detection(&mut self, det: &Detection) -> Result<(), VisionError> {
        match det.lateral_px {
            Some((x_min, x_max)) => writeln!(
                self.out,
                "{},{},{},{},{}",
                det.t_s,
                det.source.as_str(),
                det.distance_m,
                x_min,
                x_max
            )?,
            None => writeln!(
                self.out,
                "{},{},{},,",
                det.t_s,
                det.source.as_str(),
                det.distance_m
            )?,
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), VisionError> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_detections_csv(path: &Path, dets: &[Detection]) -> Result<(), VisionError> {
    let mut w = DetectionCsvWriter::create(path)?;
    for d in dets {
        w.write_detection(d)?;
    }
    w.finish()
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<Detection>, VisionError> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, what: &str| VisionError::Schema {
        path: path.display().to_string(),
        line,
        what: what.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == DETECTIONS_HEADER => {}
        _ => return Err(err(1, "expected header 't_s,source,distance_m,x_min,x_max'")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err(line_no, "expected 5 fields"));
        }
        let t_s: f64 = fields[0].parse().map_err(|_| err(line_no, "bad t_s"))?;
        let source = Source::parse(fields[1]).ok_or_else(|| err(line_no, "bad source"))?;
        let distance_m: f64 = fields[2]
            .parse()
            .map_err(|_| err(line_no, "bad distance_m"))?;
        let lateral_px = match (fields[3], fields[4]) {
            ("", "") => None,
            (a, b) => {
                let x_min: f64 = a.parse().map_err(|_| err(line_no, "bad x_min"))?;
                let x_max: f64 = b.parse().map_err(|_| err(line_no, "bad x_max"))?;
                Some((x_min, x_max))
            }
        };
        out.push(Detection {
            t_s,
            distance_m,
            source,
            lateral_px,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::fit_distance_poly;
    use std::f64::consts::PI;

    fn test_poly() -> DistancePoly {
        let samples: Vec<(f64, f64)> = (0..53)
            .map(|k| {
                let d = 11.0 + 9.0 * (PI * k as f64 / 52.0).cos();
                (240.0 + 474.2 / d, d)
            })
            .collect();
        fit_distance_poly(&samples).unwrap().0
    }

    fn wide_roi(width: u32, height: u32) -> RoiMask {
        compute_roi(
            width,
            height,
            (width as f64 / 2.0, 100.0),
            [(10.0, height as f64 - 1.0), (630.0, height as f64 - 1.0)],
            300.0,
        )
        .unwrap()
    }

    /// Bright deterministic texture tied to block-local coordinates, so a
    /// moved block carries its texture with it.
    fn draw_block(frame: &mut GrayFrame, x0: f64, y0: f64, w: u32, h: u32) {
        for by in 0..h {
            for bx in 0..w {
                let x = (x0.round() as i64 + bx as i64) as u32;
                let y = (y0.round() as i64 + by as i64) as u32;
                if x < frame.width && y < frame.height {
                    let v = 80 + ((bx / 3 * 7919 + by / 3 * 104729 + bx / 3 * (by / 3) * 31) % 150) as u8;
                    frame.set(x, y, v);
                }
            }
        }
    }

    #[test]
    fn roi_example_matches_construction() {
        let roi = compute_roi(
            640,
            480,
            (320.0, 215.0),
            [(40.0, 479.0), (600.0, 479.0)],
            12.0,
        )
        .unwrap();
        assert_eq!(
            roi.polygon,
            [
                (308.0, 215.0),
                (332.0, 215.0),
                (600.0, 479.0),
                (40.0, 479.0)
            ]
        );
        assert!(roi.contains(320, 400));
        assert!(!roi.contains(5, 220));
    }

    #[test]
    fn roi_raster_matches_ray_cast_oracle() {
        let roi = compute_roi(
            640,
            480,
            (320.0, 215.0),
            [(40.0, 479.0), (600.0, 479.0)],
            12.0,
        )
        .unwrap();
        let poly = roi.polygon;

        // Independent crossing-number test, sampled away from edges where
        // fill conventions could differ.
        let dist_to_edge = |px: f64, py: f64| -> f64 {
            let mut best = f64::INFINITY;
            for k in 0..4 {
                let (ax, ay) = poly[k];
                let (bx, by) = poly[(k + 1) % 4];
                let (vx, vy) = (bx - ax, by - ay);
                let t = (((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
                let (cx, cy) = (ax + t * vx, ay + t * vy);
                best = best.min(((px - cx).powi(2) + (py - cy).powi(2)).sqrt());
            }
            best
        };
        let oracle_inside = |px: f64, py: f64| -> bool {
            let mut crossings = 0;
            for k in 0..4 {
                let (ax, ay) = poly[k];
                let (bx, by) = poly[(k + 1) % 4];
                if (ay > py) != (by > py) {
                    let x_at = ax + (py - ay) / (by - ay) * (bx - ax);
                    if x_at > px {
                        crossings += 1;
                    }
                }
            }
            crossings % 2 == 1
        };

        let mut checked = 0;
        for y in (0..480).step_by(7) {
            for x in (0..640).step_by(7) {
                let (px, py) = (x as f64, y as f64);
                if dist_to_edge(px, py) < 1.0 {
                    continue;
                }
                assert_eq!(
                    roi.contains(x, y),
                    oracle_inside(px, py),
                    "pixel ({x},{y})"
                );
                checked += 1;
            }
        }
        assert!(checked > 3000);
    }

    #[test]
    fn degenerate_rois_are_rejected() {
        let near = [(40.0, 479.0), (600.0, 479.0)];
        assert!(matches!(
            compute_roi(640, 480, (320.0, 215.0), [(40.0, 479.0); 2], 12.0),
            Err(VisionError::DegeneratePolygon { .. })
        ));
        assert!(matches!(
            compute_roi(640, 480, (320.0, 479.0), near, 12.0),
            Err(VisionError::DegeneratePolygon { .. })
        ));
        assert!(matches!(
            compute_roi(640, 480, (320.0, 215.0), near, 0.0),
            Err(VisionError::DegeneratePolygon { .. })
        ));
    }

    #[test]
    fn mask_threshold_keeps_bright_pixels_inside() {
        let full = RoiMask::full(32, 32);
        let frame = GrayFrame::filled(32, 32, 128, 0.0);
        assert_eq!(mask_threshold(&frame, &full, 100).pixels, frame.pixels);
        assert!(mask_threshold(&frame, &full, 200)
            .pixels
            .iter()
            .all(|&p| p == 0));

        // Checkerboard through a trapezoid mask: bright cells survive only
        // inside the mask, dark cells vanish everywhere.
        let mut checker = GrayFrame::new(64, 64, 0.0);
        for y in 0..64 {
            for x in 0..64 {
                checker.set(x, y, if (x + y) % 2 == 0 { 255 } else { 0 });
            }
        }
        let roi = compute_roi(64, 64, (32.0, 10.0), [(5.0, 63.0), (58.0, 63.0)], 6.0).unwrap();
        let out = mask_threshold(&checker, &roi, 128);
        for y in 0..64 {
            for x in 0..64 {
                let expect = if roi.contains(x, y) && (x + y) % 2 == 0 {
                    255
                } else {
                    0
                };
                assert_eq!(out.get(x, y), expect, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn moving_textured_block_yields_one_detection() {
        let poly = test_poly();
        let roi = wide_roi(640, 480);
        let params = CameraParams::default();
        let mut state = CameraTrackState::new();

        let mut prev = GrayFrame::new(640, 480, 0.0);
        let mut next = GrayFrame::new(640, 480, 1.0 / 30.0);
        draw_block(&mut prev, 300.0, 300.0, 60, 80);
        draw_block(&mut next, 303.0, 300.0, 60, 80);

        let mut state2 = state.clone();
        let result = camera_detect(&prev, &next, &roi, &poly, &params, &mut state).unwrap();
        assert_eq!(result.detections.len(), 1, "expected a single cluster");
        let det = &result.detections[0];
        assert_eq!(det.source, Source::Camera);
        assert_eq!(det.t_s, 1.0 / 30.0);
        // Block bottom row is 379; allow a few pixels of corner slack.
        let d_lo = poly.eval_distance(382.0).unwrap();
        let d_hi = poly.eval_distance(372.0).unwrap();
        assert!(
            det.distance_m >= d_lo && det.distance_m <= d_hi,
            "distance {} outside [{d_lo}, {d_hi}]",
            det.distance_m
        );
        let (x_min, x_max) = det.lateral_px.unwrap();
        assert!(x_min >= 295.0 && x_max <= 370.0 && x_min < x_max);
        assert!(result.corner_count >= 4);
        assert!(result.moving_points >= 4);

        // Same inputs and state give byte-identical results.
        let again = camera_detect(&prev, &next, &roi, &poly, &params, &mut state2).unwrap();
        assert_eq!(again.detections, result.detections);
        assert_eq!(again.corner_count, result.corner_count);
    }

    #[test]
    fn static_scene_detects_nothing() {
        let poly = test_poly();
        let roi = wide_roi(640, 480);
        let params = CameraParams::default();
        let mut state = CameraTrackState::new();
        let mut frame = GrayFrame::new(640, 480, 0.0);
        draw_block(&mut frame, 300.0, 300.0, 60, 80);
        let result = camera_detect(&frame, &frame, &roi, &poly, &params, &mut state).unwrap();
        assert!(result.detections.is_empty());
        assert_eq!(result.moving_points, 0);
        assert!(result.corner_count > 0);
    }

    #[test]
    fn second_blob_creates_second_target() {
        let poly = test_poly();
        let roi = wide_roi(640, 480);
        let params = CameraParams::default();
        let mut state = CameraTrackState::new();

        let dt = 1.0 / 30.0;
        for k in 0..3 {
            let mut prev = GrayFrame::new(640, 480, k as f64 * dt);
            let mut next = GrayFrame::new(640, 480, (k as f64 + 0.5) * dt);
            let x = 200.0 + 3.0 * k as f64;
            draw_block(&mut prev, x, 320.0, 50, 60);
            draw_block(&mut next, x + 3.0, 320.0, 50, 60);
            let r = camera_detect(&prev, &next, &roi, &poly, &params, &mut state).unwrap();
            assert_eq!(r.detections.len(), 1);
        }
        assert_eq!(state.target_count(), 1);

        // A second blob far from the first becomes its own target.
        let mut prev = GrayFrame::new(640, 480, 0.2);
        let mut next = GrayFrame::new(640, 480, 0.2 + 0.5 * dt);
        draw_block(&mut prev, 209.0, 320.0, 50, 60);
        draw_block(&mut next, 212.0, 320.0, 50, 60);
        draw_block(&mut prev, 450.0, 360.0, 50, 60);
        draw_block(&mut next, 453.0, 360.0, 50, 60);
        let r = camera_detect(&prev, &next, &roi, &poly, &params, &mut state).unwrap();
        assert_eq!(r.detections.len(), 2);
        assert_eq!(state.target_count(), 2);
        // Nearest first: the lower blob (bigger row) is closer.
        assert!(r.detections[0].distance_m < r.detections[1].distance_m);
    }

    #[test]
    fn targets_expire_after_consecutive_misses() {
        let poly = test_poly();
        let roi = wide_roi(640, 480);
        let params = CameraParams::default();
        let mut state = CameraTrackState::new();

        let mut prev = GrayFrame::new(640, 480, 0.0);
        let mut next = GrayFrame::new(640, 480, 0.02);
        draw_block(&mut prev, 300.0, 300.0, 60, 80);
        draw_block(&mut next, 303.0, 300.0, 60, 80);
        camera_detect(&prev, &next, &roi, &poly, &params, &mut state).unwrap();
        assert_eq!(state.target_count(), 1);

        let empty = GrayFrame::new(640, 480, 0.05);
        for k in 0..TARGET_MAX_MISSES {
            let mut a = empty.clone();
            a.t_s = 0.05 + k as f64 * 0.033;
            camera_detect(&a, &a, &roi, &poly, &params, &mut state).unwrap();
        }
        assert_eq!(state.target_count(), 0);
    }

    #[test]
    fn at_most_five_targets_nearest_first() {
        let poly = test_poly();
        let roi = wide_roi(640, 480);
        let params = CameraParams::default();
        let mut state = CameraTrackState::new();

        let mut prev = GrayFrame::new(640, 480, 0.0);
        let mut next = GrayFrame::new(640, 480, 0.033);
        // Six well-separated blobs: three on a near row, three farther up.
        let near_row = 360.0;
        let far_row = 300.0;
        for (i, &x) in [150.0, 290.0, 430.0].iter().enumerate() {
            let _ = i;
            draw_block(&mut prev, x, near_row, 24, 24);
            draw_block(&mut next, x + 3.0, near_row, 24, 24);
            draw_block(&mut prev, x + 70.0, far_row, 24, 24);
            draw_block(&mut next, x + 73.0, far_row, 24, 24);
        }
        let r = camera_detect(&prev, &next, &roi, &poly, &params, &mut state).unwrap();
        assert_eq!(r.detections.len(), 5);
        assert_eq!(state.target_count(), 5);
        for pair in r.detections.windows(2) {
            assert!(pair[0].distance_m <= pair[1].distance_m);
        }
        // The three near-row blobs all made the cut.
        let near_d = poly.eval_distance(384.0).unwrap();
        let close_count = r
            .detections
            .iter()
            .filter(|d| (d.distance_m - near_d).abs() < 0.5)
            .count();
        assert_eq!(close_count, 3);
    }

    #[test]
    fn cio_examples() {
        let det = |d: f64| Detection {
            t_s: 0.0,
            distance_m: d,
            source: Source::Camera,
            lateral_px: Some((0.0, 1.0)),
        };
        let dets = vec![det(12.0), det(8.0), det(15.0)];
        assert_eq!(select_cio_camera(&dets).unwrap().distance_m, 8.0);
        assert!(select_cio_camera(&[]).is_none());

        let mut a = det(9.0);
        a.lateral_px = Some((1.0, 2.0));
        let b = det(9.0);
        let got = select_cio_camera(&[a.clone(), b]).unwrap();
        assert_eq!(got.lateral_px, a.lateral_px, "tie keeps first by order");
    }

    #[test]
    fn detections_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.csv");
        let dets = vec![
            Detection {
                t_s: 0.1,
                distance_m: 12.345678901234,
                source: Source::Camera,
                lateral_px: Some((120.5, 180.25)),
            },
            Detection {
                t_s: 0.2,
                distance_m: 3.0,
                source: Source::Lidar,
                lateral_px: None,
            },
        ];
        write_detections_csv(&path, &dets).unwrap();
        let back = read_detections_csv(&path).unwrap();
        assert_eq!(back, dets);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_s,source,distance_m,x_min,x_max\n"));
        assert!(text.contains("camera"));
        assert!(text.contains("lidar"));
    }

    #[test]
    fn detections_csv_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(matches!(
            read_detections_csv(&path),
            Err(VisionError::Schema { line: 1, .. })
        ));

        std::fs::write(
            &path,
            "t_s,source,distance_m,x_min,x_max\n0.1,sonar,3.0,,\n",
        )
        .unwrap();
        assert!(matches!(
            read_detections_csv(&path),
            Err(VisionError::Schema { line: 2, .. })
        ));

        std::fs::write(&path, "t_s,source,distance_m,x_min,x_max\n0.1,camera,3.0\n").unwrap();
        assert!(matches!(
            read_detections_csv(&path),
            Err(VisionError::Schema { line: 2, .. })
        ));
    }
}
