//! End-to-end drivers: the calibration sweep, the closed-loop scenario
//! run, and deterministic log replay.
//!
//! A run writes five logs plus a report into its output directory:
//!
//! - `lidar.csv` — raw 100 Hz scans, before gating
//! - `detections.csv` — per-sensor detections as fusion consumed them
//!   (camera distances are already aligned into the lidar range frame)
//! - `env.csv` — one row per camera frame: mean intensity, corner count
//! - `fusion.csv` — the fused track, one row per frame
//! - `ground_truth.csv` — simulator truth for scoring
//! - `report.json` — the resolved scenario config plus summary metrics
//!
//! Because `report.json` carries the full config and `env.csv` carries the
//! frame clock, `cmd_replay` can re-run gating and fusion from the logs
//! alone and must reproduce `fusion.csv` byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{
    fit_distance_poly, load_samples_csv, CalibError, CalibrationArtifact, FitReport, SpatialMap,
    TriggerClock,
};
use crate::fusion::{
    fuse, read_env_csv, EnvCsvWriter, EnvSignal, FusedOutput, FusionCsvWriter, FusionError,
    FusionState, MainSensor, Warning,
};
use crate::lidar::{
    read_stream_csv, select_cio, Detection, GateResult, LidarCsvWriter, LidarError, LidarScan,
    LidarTracker, Source,
};
use crate::sim::{
    build_scenario, render_frame, sample_lidar, ped_bottom_row, GroundTruthCsvWriter, PedKin,
    ScenarioConfig, SimError, WorldState,
};
use crate::vision::{
    camera_detect, read_detections_csv, select_cio_camera, write_pgm, CameraTrackState,
    DetectionCsvWriter, VisionError,
};

/// The run stops once the pedestrian is closer than this; the scenario's
/// closing seconds are inside any sensible braking envelope anyway.
pub const STOP_GT_M: f64 = 0.5;
/// Frames a state must hold to count as a sustained transition
/// (a third of a second at 30 fps).
pub const SUSTAIN_FRAMES: usize = 10;
/// A red warning with the target still farther than this counts as a
/// false alarm (1 m of slack beyond the warning boundary).
pub const FALSE_RED_GT_M: f64 = 11.0;
/// Any warning with the target farther than this counts as a false alarm
/// (beyond the camera's calibrated range plus slack).
pub const FALSE_WARN_GT_M: f64 = 21.0;

pub const LIDAR_CSV: &str = "lidar.csv";
pub const DETECTIONS_CSV: &str = "detections.csv";
pub const ENV_CSV: &str = "env.csv";
pub const FUSION_CSV: &str = "fusion.csv";
pub const GROUND_TRUTH_CSV: &str = "ground_truth.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPLAY_FUSION_CSV: &str = "fusion_replay.csv";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Lidar(#[from] LidarError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("replay: {0}")]
    Replay(String),
}

/// Lobatto-style station spacing for the distance-curve sweep: dense near
/// both ends of the 2-20 m band, where the curve bends hardest.
pub fn sweep_distances(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|k| 11.0 + 9.0 * (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Walks a pedestrian diagonally through a station and returns the mean
/// camera-reported distance paired with the mean true distance over the
/// frames that produced a detection. This is how the spatial map learns
/// the camera's systematic bias: the pipeline measures a cluster's bottom
/// edge from corner points, which sit a little above the true ground
/// contact. The lateral walk gives every corner trackable flow; the
/// longitudinal sweep slides the ground contact across several pixel
/// rows, so the averages integrate out the row quantization that would
/// otherwise freeze one arbitrary subpixel phase into the anchor.
fn measure_station(
    cfg: &ScenarioConfig,
    poly: &crate::calib::DistancePoly,
    station_m: f64,
) -> Result<(f64, f64), RunnerError> {
    let mask = cfg.roi.build(cfg.camera.width_px, cfg.camera.height_px)?;
    let mut state = CameraTrackState::new();
    let walk_speed = 1.0;
    let frames = 40;
    // Keep the near end of the sweep where the ground contact is still
    // inside the frame; below roughly 2 m it drops off the bottom edge.
    let lon_lo = (station_m - 0.5).max(2.05);
    let lon_hi = station_m + 0.5;
    let mut prev = None;
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for k in 0..frames {
        let t = k as f64 / cfg.camera.fps;
        let lon = lon_hi + (lon_lo - lon_hi) * k as f64 / (frames - 1) as f64;
        let world = WorldState {
            t_s: t,
            vehicle_x_m: 0.0,
            vehicle_speed_mps: 0.0,
            ped: PedKin {
                lon_m: lon,
                lat_m: -0.4 + walk_speed * t,
                lat_speed_mps: walk_speed,
            },
            second_ped: None,
            ground_truth_distance_m: lon,
        };
        let frame = render_frame(&world, cfg)?;
        if let Some(prev) = &prev {
            let dets = camera_detect(prev, &frame, &mask, poly, &cfg.vision, &mut state)?;
            if let Some(cio) = select_cio_camera(&dets.detections) {
                pairs.push((cio.distance_m, lon));
            }
        }
        prev = Some(frame);
    }
    if pairs.is_empty() {
        return Err(RunnerError::Calibration(format!(
            "no camera detections at the {station_m} m station"
        )));
    }
    let n = pairs.len() as f64;
    let mean_cam = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_true = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    Ok((mean_cam, mean_true))
}

/// Calibrates the distance curve and the camera-to-lidar spatial map.
///
/// Without a samples file, the sweep places the target at 53 stations
/// across 2-20 m and records its ground-contact row under the configured
/// camera geometry; the spatial map is then anchored by running the full
/// camera pipeline at 1 m stations from 2 to 10 m against true range.
/// With a samples file, the curve is fitted to the provided rows and the
/// map falls back to identity anchors, since there is nothing to measure.
pub fn cmd_calibrate(
    cfg: &ScenarioConfig,
    samples_csv: Option<&Path>,
    out_path: &Path,
) -> Result<(CalibrationArtifact, FitReport), RunnerError> {
    // The sweep models a bench procedure under controlled lighting; a
    // scenario's ambient level describes the run, not the rig.
    let cfg = &{
        let mut c = cfg.clone();
        c.ambient_level = 255;
        c
    };
    let samples: Vec<(f64, f64)> = match samples_csv {
        Some(path) => load_samples_csv(path)?,
        None => sweep_distances(53)
            .into_iter()
            .map(|d| (ped_bottom_row(cfg, d), d))
            .collect(),
    };
    let (poly, report) = fit_distance_poly(&samples)?;

    let anchors: Vec<(f64, f64)> = if samples_csv.is_some() {
        (2..=10).map(|d| (d as f64, d as f64)).collect()
    } else {
        let mut pairs = Vec::new();
        for station in 2..=10 {
            pairs.push(measure_station(cfg, &poly, station as f64)?);
        }
        pairs
    };
    let spatial_map = SpatialMap::build(&anchors)?;

    let artifact = CalibrationArtifact { poly, spatial_map };
    artifact.save(out_path)?;
    Ok((artifact, report))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TransitionEvent {
    pub t_s: f64,
    pub gt_distance_m: f64,
    pub fused_distance_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub frames: usize,
    /// Frames on which each sensor produced a closest-object distance.
    pub lidar_frames: usize,
    pub camera_frames: usize,
    pub lidar_detection_rate: f64,
    pub camera_detection_rate: f64,
    /// Fraction of frames with truth inside 2-20 m that carried a fused
    /// distance.
    pub coverage_2_to_20: f64,
    /// RMSE of the fused distance against truth over the 2-20 m detection
    /// range, split at the 9 m sensor handover band.
    pub rmse_near_m: Option<f64>,
    pub rmse_far_m: Option<f64>,
    /// First sustained switch of the main sensor from camera to lidar.
    pub main_switch: Option<TransitionEvent>,
    /// First sustained entry into any warning state.
    pub first_yellow: Option<TransitionEvent>,
    /// First sustained entry into the red state.
    pub first_red: Option<TransitionEvent>,
    pub sustained_red_runs: usize,
    pub false_alarm_red_frames: usize,
    pub false_alarm_warning_frames: usize,
}

/// The whole `report.json` document: resolved config plus metrics, which
/// together make a run directory self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDocument {
    pub config: ScenarioConfig,
    pub report: RunReport,
}

/// Aligns camera detections into the lidar range frame. Both the live
/// run and replay must select the closest object from identically mapped
/// values, so they share this helper.
fn map_camera_detections(dets: &[Detection], calib: &CalibrationArtifact) -> Vec<Detection> {
    dets.iter()
        .map(|d| Detection {
            distance_m: calib.spatial_map.align_camera_to_lidar(d.distance_m),
            ..*d
        })
        .collect()
}

/// One scored frame: truth paired with the fused output.
struct FrameRow {
    gt_m: f64,
    out: FusedOutput,
}

fn rmse(errors: &[f64]) -> Option<f64> {
    if errors.is_empty() {
        return None;
    }
    Some((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Finds the first index starting a run of at least `SUSTAIN_FRAMES`
/// frames satisfying `pred`.
fn first_sustained<F: Fn(&FrameRow) -> bool>(rows: &[FrameRow], pred: F) -> Option<usize> {
    let mut run_start = None;
    let mut run_len = 0;
    for (i, row) in rows.iter().enumerate() {
        if pred(row) {
            if run_len == 0 {
                run_start = Some(i);
            }
            run_len += 1;
            if run_len >= SUSTAIN_FRAMES {
                return run_start;
            }
        } else {
            run_len = 0;
        }
    }
    None
}

fn event_at(rows: &[FrameRow], i: usize) -> TransitionEvent {
    TransitionEvent {
        t_s: rows[i].out.t_s,
        gt_distance_m: rows[i].gt_m,
        fused_distance_m: rows[i].out.distance_m,
    }
}

fn compute_report(cfg: &ScenarioConfig, rows: &[FrameRow]) -> RunReport {
    let frames = rows.len();
    let lidar_frames = rows.iter().filter(|r| r.out.lidar_raw_m.is_some()).count();
    let camera_frames = rows.iter().filter(|r| r.out.camera_raw_m.is_some()).count();
    let rate = |n: usize| if frames == 0 { 0.0 } else { n as f64 / frames as f64 };

    let in_band: Vec<&FrameRow> = rows
        .iter()
        .filter(|r| (2.0..=20.0).contains(&r.gt_m))
        .collect();
    let covered = in_band.iter().filter(|r| r.out.distance_m.is_some()).count();
    let coverage_2_to_20 = if in_band.is_empty() {
        0.0
    } else {
        covered as f64 / in_band.len() as f64
    };

    let errors = |band: fn(f64) -> bool| -> Vec<f64> {
        rows.iter()
            .filter(|r| band(r.gt_m))
            .filter_map(|r| r.out.distance_m.map(|d| d - r.gt_m))
            .collect()
    };
    let rmse_near_m = rmse(&errors(|gt| (2.0..9.0).contains(&gt)));
    let rmse_far_m = rmse(&errors(|gt| (9.0..=20.0).contains(&gt)));

    // Around the handover band the per-frame main-sensor label flickers:
    // range noise puts single readings on either side of the edge, and a
    // dropped return hands one frame back to the camera. The switch event
    // is therefore the first lidar-main frame that both follows a
    // camera-main frame and opens a window in which lidar dominates,
    // rather than the first unbroken lidar run, which noise postpones.
    let saw_camera_main = |upto: usize| {
        rows[..upto]
            .iter()
            .any(|r| r.out.main_sensor == MainSensor::Camera)
    };
    let lidar_dominates = |start: usize| {
        let end = start + SUSTAIN_FRAMES;
        if end > rows.len() {
            return false;
        }
        let lidar = rows[start..end]
            .iter()
            .filter(|r| r.out.main_sensor == MainSensor::Lidar)
            .count();
        lidar * 10 >= SUSTAIN_FRAMES * 8
    };
    let main_switch = (0..rows.len())
        .find(|&i| {
            rows[i].out.main_sensor == MainSensor::Lidar
                && saw_camera_main(i)
                && lidar_dominates(i)
        })
        .map(|i| event_at(rows, i));

    let first_yellow = first_sustained(rows, |r| r.out.warning != Warning::NoWarning)
        .map(|i| event_at(rows, i));
    let first_red = first_sustained(rows, |r| r.out.warning == Warning::Level2Red)
        .map(|i| event_at(rows, i));

    let mut sustained_red_runs = 0;
    let mut run_len = 0;
    for row in rows {
        if row.out.warning == Warning::Level2Red {
            run_len += 1;
            if run_len == SUSTAIN_FRAMES {
                sustained_red_runs += 1;
            }
        } else {
            run_len = 0;
        }
    }

    let false_alarm_red_frames = rows
        .iter()
        .filter(|r| r.out.warning == Warning::Level2Red && r.gt_m > FALSE_RED_GT_M)
        .count();
    let false_alarm_warning_frames = rows
        .iter()
        .filter(|r| r.out.warning != Warning::NoWarning && r.gt_m > FALSE_WARN_GT_M)
        .count();

    RunReport {
        scenario: cfg.kind.as_str().to_string(),
        seed: cfg.seed,
        frames,
        lidar_frames,
        camera_frames,
        lidar_detection_rate: rate(lidar_frames),
        camera_detection_rate: rate(camera_frames),
        coverage_2_to_20,
        rmse_near_m,
        rmse_far_m,
        main_switch,
        first_yellow,
        first_red,
        sustained_red_runs,
        false_alarm_red_frames,
        false_alarm_warning_frames,
    }
}

/// Runs a scenario closed-loop and writes all logs into `out_dir`.
pub fn cmd_run(
    cfg: &ScenarioConfig,
    calib: &CalibrationArtifact,
    out_dir: &Path,
    dump_frames: bool,
) -> Result<RunReport, RunnerError> {
    fs::create_dir_all(out_dir)?;
    let scn = build_scenario(cfg)?;
    let mask = cfg.roi.build(cfg.camera.width_px, cfg.camera.height_px)?;
    let frames_dir: PathBuf = out_dir.join(FRAMES_DIR);
    if dump_frames {
        fs::create_dir_all(&frames_dir)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tracker = LidarTracker::new();
    let mut cam_state = CameraTrackState::new();
    let mut fusion_state = FusionState::default();
    let mut clock = TriggerClock::new(cfg.camera.fps);

    let mut lidar_w = LidarCsvWriter::create(&out_dir.join(LIDAR_CSV))?;
    let mut det_w = DetectionCsvWriter::create(&out_dir.join(DETECTIONS_CSV))?;
    let mut env_w = EnvCsvWriter::create(&out_dir.join(ENV_CSV))?;
    let mut fusion_w = FusionCsvWriter::create(&out_dir.join(FUSION_CSV))?;
    let mut gt_w = GroundTruthCsvWriter::create(&out_dir.join(GROUND_TRUTH_CSV))?;

    let frame_period = 1.0 / cfg.camera.fps;
    let scan_period = 1.0 / cfg.lidar.rate_hz;
    let mut scans: Vec<LidarScan> = Vec::new();
    let mut verdicts: Vec<[GateResult; 3]> = Vec::new();
    let mut next_scan = 0u64;

    let mut prev_frame = None;
    let mut rows: Vec<FrameRow> = Vec::new();

    for k in 0u64.. {
        let ft = k as f64 * frame_period;
        if ft >= cfg.duration_s {
            break;
        }
        let world = scn.world_at(ft);
        if world.ground_truth_distance_m < STOP_GT_M {
            break;
        }

        // The lidar free-runs; deliver every scan due by this frame.
        while next_scan as f64 * scan_period <= ft + 1e-9 {
            let t_l = next_scan as f64 * scan_period;
            let scan = sample_lidar(&scn.world_at(t_l), cfg, &mut rng);
            lidar_w.write_scan(&scan)?;
            verdicts.push(tracker.ingest(&scan));
            scans.push(scan);
            next_scan += 1;
        }

        let frame = render_frame(&world, cfg)?;
        if dump_frames {
            write_pgm(&frames_dir.join(format!("frame_{k:06}.pgm")), &frame)?;
        }

        let (camera_dets, corner_count) = match &prev_frame {
            Some(prev) => {
                let found = camera_detect(prev, &frame, &mask, &calib.poly, &cfg.vision, &mut cam_state)?;
                (found.detections, found.corner_count)
            }
            None => (Vec::new(), 0),
        };
        let env = EnvSignal {
            mean_intensity: frame.mean_intensity(),
            corner_count,
        };
        env_w.write_signal(ft, &env)?;

        // The detections log keeps the camera's own measurements; the
        // spatial-map alignment into the lidar range frame happens on the
        // way into fusion, and replay re-applies it from the same log.
        for det in &camera_dets {
            det_w.write_detection(det)?;
        }
        let mapped = map_camera_detections(&camera_dets, calib);
        let camera_cio = select_cio_camera(&mapped);

        let aligned = clock.align_lidar_to_frame(ft, &scans)?;
        let i = scans.partition_point(|s| s.t_s <= ft);
        debug_assert_eq!(aligned.t_s, scans[i - 1].t_s);
        let lidar_cio = select_cio(&scans[i - 1], &verdicts[i - 1]);
        if let Some(det) = &lidar_cio {
            det_w.write_detection(det)?;
        }

        let out = fuse(
            lidar_cio.as_ref(),
            camera_cio.as_ref(),
            &env,
            &cfg.fusion,
            &mut fusion_state,
            ft,
        );
        fusion_w.write_output(&out)?;
        gt_w.write_state(&world)?;
        rows.push(FrameRow {
            gt_m: world.ground_truth_distance_m,
            out,
        });
        prev_frame = Some(frame);
    }

    lidar_w.finish()?;
    det_w.finish()?;
    env_w.finish()?;
    fusion_w.finish()?;
    gt_w.finish()?;

    let report = compute_report(cfg, &rows);
    let doc = RunDocument {
        config: cfg.clone(),
        report: report.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| RunnerError::Replay(format!("report serialization: {e}")))?;
    text.push('\n');
    fs::write(out_dir.join(REPORT_JSON), text)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub frames: usize,
    /// True when the regenerated fusion log matches the original byte for
    /// byte.
    pub identical: bool,
}

/// Re-runs gating and fusion from a run directory's logs and compares the
/// regenerated fusion log against the recorded one. Fusion parameters and
/// the frame rate come from the config embedded in `report.json`; the
/// calibration artifact supplies the camera-to-lidar alignment, exactly
/// as in the live run.
pub fn cmd_replay(run_dir: &Path, calib: &CalibrationArtifact) -> Result<ReplayOutcome, RunnerError> {
    let doc_text = fs::read_to_string(run_dir.join(REPORT_JSON))?;
    let doc: RunDocument = serde_json::from_str(&doc_text)
        .map_err(|e| RunnerError::Replay(format!("report.json: {e}")))?;
    let cfg = doc.config;

    let scans = read_stream_csv(&run_dir.join(LIDAR_CSV))?;
    let detections = read_detections_csv(&run_dir.join(DETECTIONS_CSV))?;
    let env_rows = read_env_csv(&run_dir.join(ENV_CSV))?;

    let mut tracker = LidarTracker::new();
    let verdicts: Vec<[GateResult; 3]> = scans.iter().map(|s| tracker.ingest(s)).collect();

    let mut fusion_state = FusionState::default();
    let mut clock = TriggerClock::new(cfg.camera.fps);
    let replay_path = run_dir.join(REPLAY_FUSION_CSV);
    let mut fusion_w = FusionCsvWriter::create(&replay_path)?;
    let mut frames = 0;
    for (ft, env) in &env_rows {
        let lidar_cio = if scans.is_empty() {
            None
        } else {
            let aligned = clock.align_lidar_to_frame(*ft, &scans)?;
            let i = scans.partition_point(|s| s.t_s <= *ft);
            debug_assert_eq!(aligned.t_s, scans[i - 1].t_s);
            select_cio(&scans[i - 1], &verdicts[i - 1])
        };
        let frame_dets: Vec<Detection> = detections
            .iter()
            .filter(|d| d.source == Source::Camera && d.t_s == *ft)
            .cloned()
            .collect();
        let mapped = map_camera_detections(&frame_dets, calib);
        let camera_cio = select_cio_camera(&mapped);
        let out = fuse(
            lidar_cio.as_ref(),
            camera_cio.as_ref(),
            env,
            &cfg.fusion,
            &mut fusion_state,
            *ft,
        );
        fusion_w.write_output(&out)?;
        frames += 1;
    }
    fusion_w.finish()?;

    let original = fs::read(run_dir.join(FUSION_CSV))?;
    let regenerated = fs::read(&replay_path)?;
    Ok(ReplayOutcome {
        frames,
        identical: original == regenerated,
    })
}
