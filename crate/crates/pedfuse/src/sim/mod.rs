//! Deterministic world simulator for crossing-pedestrian test scenarios.
//!
//! A vehicle drives straight at constant speed while a pedestrian crosses
//! its path so that, with no braking, the two meet at a configured impact
//! point on the vehicle's front at the end of the scenario. The simulator
//! produces camera frames, three-beam lidar scans, and a ground-truth log,
//! all reproducible bit-for-bit from the scenario seed.

pub mod lidar_model;
pub mod render;

use std::fs;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionParams;
use crate::vision::{compute_roi, CameraParams, RoiMask, VisionError};

pub use lidar_model::sample_lidar;
pub use render::{focal_px, ped_bottom_row, render_frame};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("pedestrian is behind the camera plane")]
    BehindCamera,
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Euro NCAP style crossing scenario variants: adult from the far side
/// with a 50% impact point, or from the near side at 25% / 75%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "CVFA")]
    Cvfa,
    #[serde(rename = "CVNA25")]
    Cvna25,
    #[serde(rename = "CVNA75")]
    Cvna75,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Cvfa => "CVFA",
            ScenarioKind::Cvna25 => "CVNA25",
            ScenarioKind::Cvna75 => "CVNA75",
        }
    }

    /// Impact point as a fraction of vehicle width, fixed per variant.
    pub fn impact_fraction(&self) -> f64 {
        match self {
            ScenarioKind::Cvfa => 0.50,
            ScenarioKind::Cvna25 => 0.25,
            ScenarioKind::Cvna75 => 0.75,
        }
    }

    /// Default walking speed: a running adult for the far-side case,
    /// a walking adult for the near-side cases.
    pub fn default_ped_speed_mps(&self) -> f64 {
        match self {
            ScenarioKind::Cvfa => 8.0 / 3.6,
            ScenarioKind::Cvna25 | ScenarioKind::Cvna75 => 5.0 / 3.6,
        }
    }

    /// Far-side pedestrians start on the positive lateral side, near-side
    /// pedestrians on the negative side.
    pub fn approach_sign(&self) -> f64 {
        match self {
            ScenarioKind::Cvfa => 1.0,
            ScenarioKind::Cvna25 | ScenarioKind::Cvna75 => -1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub hfov_deg: f64,
    pub height_m: f64,
    pub fps: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            hfov_deg: 78.0,
            height_m: 1.2,
            fps: 30.0,
            width_px: 640,
            height_px: 480,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub rate_hz: f64,
    pub sigma_m: f64,
    /// Detection band in meters, inclusive.
    pub range_m: (f64, f64),
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            hfov_deg: 27.0,
            vfov_deg: 11.0,
            rate_hz: 100.0,
            sigma_m: 0.1,
            range_m: (1.0, 10.0),
        }
    }
}

/// Trapezoidal region-of-interest parameters for the camera pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiConfig {
    pub far_point: (f64, f64),
    pub near_points: [(f64, f64); 2],
    pub half_width_px: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        RoiConfig {
            far_point: (320.0, 215.0),
            near_points: [(40.0, 479.0), (600.0, 479.0)],
            half_width_px: 12.0,
        }
    }
}

impl RoiConfig {
    pub fn build(&self, width: u32, height: u32) -> Result<RoiMask, VisionError> {
        compute_roi(
            width,
            height,
            self.far_point,
            self.near_points,
            self.half_width_px,
        )
    }
}

/// An optional second crossing pedestrian, for multi-target scenes. It
/// stands at its own longitudinal station and moves laterally at a signed
/// rate, independent of the scenario's impact construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecondPedestrian {
    /// Longitudinal station, meters from the vehicle's start position.
    pub lon_m: f64,
    pub start_lat_m: f64,
    pub lat_speed_mps: f64,
}

/// Fully resolved scenario configuration. Optional JSON fields are filled
/// with per-kind defaults by [`ScenarioConfig::from_json_str`]; the
/// `Deserialize` impl expects the fully resolved form, as embedded in a
/// run's report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub vehicle_speed_mps: f64,
    pub ped_speed_mps: f64,
    pub impact_fraction: f64,
    pub vehicle_width_m: f64,
    /// (width, height) of the pedestrian rectangle.
    pub ped_size_m: (f64, f64),
    pub camera: CameraConfig,
    pub lidar: LidarConfig,
    pub roi: RoiConfig,
    pub vision: CameraParams,
    pub fusion: FusionParams,
    pub seed: u64,
    pub duration_s: f64,
    /// Global brightness scale, 0 (black night) to 255 (full daylight).
    pub ambient_level: u8,
    /// Probability that a lidar channel return carries an additive spike.
    pub spike_prob: f64,
    pub spike_magnitude_m: f64,
    pub second_pedestrian: Option<SecondPedestrian>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    kind: ScenarioKind,
    vehicle_speed_mps: Option<f64>,
    ped_speed_mps: Option<f64>,
    impact_fraction: Option<f64>,
    vehicle_width_m: Option<f64>,
    ped_size_m: Option<(f64, f64)>,
    #[serde(default)]
    camera: CameraConfig,
    #[serde(default)]
    lidar: LidarConfig,
    #[serde(default)]
    roi: RoiConfig,
    #[serde(default)]
    vision: CameraParams,
    #[serde(default)]
    fusion: FusionParams,
    seed: Option<u64>,
    duration_s: Option<f64>,
    ambient_level: Option<u8>,
    spike_prob: Option<f64>,
    spike_magnitude_m: Option<f64>,
    second_pedestrian: Option<SecondPedestrian>,
}

impl ScenarioConfig {
    /// All defaults for a scenario kind: 15 km/h vehicle, per-kind walking
    /// speed, 7.2 s to impact (30 m of approach), full daylight.
    pub fn default_for(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            kind,
            vehicle_speed_mps: 15.0 / 3.6,
            ped_speed_mps: kind.default_ped_speed_mps(),
            impact_fraction: kind.impact_fraction(),
            vehicle_width_m: 1.8,
            ped_size_m: (0.5, 1.8),
            camera: CameraConfig::default(),
            lidar: LidarConfig::default(),
            roi: RoiConfig::default(),
            vision: CameraParams::default(),
            fusion: FusionParams::default(),
            seed: 0,
            duration_s: 7.2,
            ambient_level: 255,
            spike_prob: 0.0,
            spike_magnitude_m: 0.5,
            second_pedestrian: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, SimError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        let kind = file.kind;
        let mut cfg = ScenarioConfig::default_for(kind);
        if let Some(v) = file.vehicle_speed_mps {
            cfg.vehicle_speed_mps = v;
        }
        if let Some(v) = file.ped_speed_mps {
            cfg.ped_speed_mps = v;
        }
        if let Some(f) = file.impact_fraction {
            if (f - kind.impact_fraction()).abs() > 1e-12 {
                return Err(SimError::Config(format!(
                    "impact_fraction {f} does not match kind {} (must be {})",
                    kind.as_str(),
                    kind.impact_fraction()
                )));
            }
        }
        if let Some(v) = file.vehicle_width_m {
            cfg.vehicle_width_m = v;
        }
        if let Some(v) = file.ped_size_m {
            cfg.ped_size_m = v;
        }
        cfg.camera = file.camera;
        cfg.lidar = file.lidar;
        cfg.roi = file.roi;
        cfg.vision = file.vision;
        cfg.fusion = file.fusion;
        if let Some(v) = file.seed {
            cfg.seed = v;
        }
        if let Some(v) = file.duration_s {
            cfg.duration_s = v;
        }
        if let Some(v) = file.ambient_level {
            cfg.ambient_level = v;
        }
        if let Some(v) = file.spike_prob {
            cfg.spike_prob = v;
        }
        if let Some(v) = file.spike_magnitude_m {
            cfg.spike_magnitude_m = v;
        }
        cfg.second_pedestrian = file.second_pedestrian;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path)?;
        ScenarioConfig::from_json_str(&text).map_err(|e| match e {
            SimError::Config(msg) => SimError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.vehicle_width_m <= 0.0 || self.ped_size_m.0 <= 0.0 || self.ped_size_m.1 <= 0.0 {
            return Err(SimError::Config("sizes must be positive".to_string()));
        }
        if self.camera.fps <= 0.0 || self.lidar.rate_hz <= 0.0 {
            return Err(SimError::Config("rates must be positive".to_string()));
        }
        if self.camera.width_px < 8 || self.camera.height_px < 8 {
            return Err(SimError::Config("frame too small".to_string()));
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return Err(SimError::Config("spike_prob must be in [0, 1]".to_string()));
        }
        if self.lidar.range_m.0 <= 0.0 || self.lidar.range_m.1 <= self.lidar.range_m.0 {
            return Err(SimError::Config("bad lidar range band".to_string()));
        }
        if self.lidar.sigma_m < 0.0 {
            return Err(SimError::Config("sigma must be nonnegative".to_string()));
        }
        Ok(())
    }
}

/// One pedestrian's kinematic state: fixed longitudinal station, constant
/// lateral velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedKin {
    pub lon_m: f64,
    pub lat_m: f64,
    pub lat_speed_mps: f64,
}

/// World snapshot at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t_s: f64,
    pub vehicle_x_m: f64,
    pub vehicle_speed_mps: f64,
    pub ped: PedKin,
    pub second_ped: Option<PedKin>,
    /// Longitudinal gap to the primary pedestrian.
    pub ground_truth_distance_m: f64,
}

/// Constant-velocity Euler step; exact for this world's linear motion.
pub fn step(world: &WorldState, dt: f64) -> WorldState {
    assert!(dt > 0.0, "dt must be positive");
    let vehicle_x_m = world.vehicle_x_m + world.vehicle_speed_mps * dt;
    let advance = |p: &PedKin| PedKin {
        lon_m: p.lon_m,
        lat_m: p.lat_m + p.lat_speed_mps * dt,
        lat_speed_mps: p.lat_speed_mps,
    };
    let ped = advance(&world.ped);
    WorldState {
        t_s: world.t_s + dt,
        vehicle_x_m,
        vehicle_speed_mps: world.vehicle_speed_mps,
        ped,
        second_ped: world.second_ped.as_ref().map(advance),
        ground_truth_distance_m: ped.lon_m - vehicle_x_m,
    }
}

/// A built scenario: the impact construction plus closed-form kinematics.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    /// Impact happens at the end of the configured duration.
    pub t_impact_s: f64,
    /// Pedestrian longitudinal station, meters from the vehicle start.
    pub ped_lon_m: f64,
    /// Lateral coordinate of the impact point on the vehicle front.
    pub impact_lat_m: f64,
    pub ped_start_lat_m: f64,
    /// Signed lateral rate; the pedestrian walks toward the impact point.
    pub ped_lat_rate_mps: f64,
}

/// Computes the crossing geometry: the pedestrian starts `speed * t_impact`
/// beyond the impact point on its approach side and reaches the point
/// exactly when the vehicle front does.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    if cfg.ped_speed_mps <= 0.0 {
        return Err(SimError::InfeasibleGeometry(
            "pedestrian speed must be positive to reach the impact point".to_string(),
        ));
    }
    if cfg.vehicle_speed_mps <= 0.0 {
        return Err(SimError::InfeasibleGeometry(
            "vehicle speed must be positive".to_string(),
        ));
    }
    // Zero duration is a degenerate but legal scenario (an empty run);
    // only a negative one is impossible to schedule.
    if cfg.duration_s < 0.0 {
        return Err(SimError::InfeasibleGeometry(
            "duration must be nonnegative".to_string(),
        ));
    }
    let t_impact_s = cfg.duration_s;
    let ped_lon_m = cfg.vehicle_speed_mps * t_impact_s;
    let impact_lat_m = (cfg.impact_fraction - 0.5) * cfg.vehicle_width_m;
    let sign = cfg.kind.approach_sign();
    let ped_start_lat_m = impact_lat_m + sign * cfg.ped_speed_mps * t_impact_s;
    let ped_lat_rate_mps = -sign * cfg.ped_speed_mps;
    Ok(Scenario {
        cfg: cfg.clone(),
        t_impact_s,
        ped_lon_m,
        impact_lat_m,
        ped_start_lat_m,
        ped_lat_rate_mps,
    })
}

impl Scenario {
    /// Closed-form world state at time `t`, consistent with `step`.
    pub fn world_at(&self, t: f64) -> WorldState {
        let vehicle_x_m = self.cfg.vehicle_speed_mps * t;
        let ped = PedKin {
            lon_m: self.ped_lon_m,
            lat_m: self.ped_start_lat_m + self.ped_lat_rate_mps * t,
            lat_speed_mps: self.ped_lat_rate_mps,
        };
        let second_ped = self.cfg.second_pedestrian.as_ref().map(|s| PedKin {
            lon_m: s.lon_m,
            lat_m: s.start_lat_m + s.lat_speed_mps * t,
            lat_speed_mps: s.lat_speed_mps,
        });
        WorldState {
            t_s: t,
            vehicle_x_m,
            vehicle_speed_mps: self.cfg.vehicle_speed_mps,
            ped,
            second_ped,
            ground_truth_distance_m: self.ped_lon_m - vehicle_x_m,
        }
    }

    pub fn initial_state(&self) -> WorldState {
        self.world_at(0.0)
    }
}

pub const GROUND_TRUTH_HEADER: &str = "t_s,gt_distance_m,ped_lat_m";

/// Streaming CSV writer for the ground-truth log.
pub struct GroundTruthCsvWriter {
    out: BufWriter<fs::File>,
}

impl GroundTruthCsvWriter {
    pub fn create(path: &Path) -> Result<Self, SimError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{GROUND_TRUTH_HEADER}")?;
        Ok(GroundTruthCsvWriter { out })
    }

    pub fn write_state(&mut self, world: &WorldState) -> Result<(), SimError> {
        writeln!(
            self.out,
            "{},{},{}",
            world.t_s, world.ground_truth_distance_m, world.ped.lat_m
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), SimError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a ground-truth log back as (t_s, gt_distance_m, ped_lat_m) rows.
pub fn read_ground_truth_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>, SimError> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, what: &str| {
        SimError::Config(format!("{}:{line}: {what}", path.display()))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == GROUND_TRUTH_HEADER => {}
        _ => return Err(bad(1, "bad header")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad(line_no, "expected 3 fields"));
        }
        let t: f64 = fields[0].parse().map_err(|_| bad(line_no, "bad t_s"))?;
        let d: f64 = fields[1]
            .parse()
            .map_err(|_| bad(line_no, "bad gt_distance_m"))?;
        let lat: f64 = fields[2]
            .parse()
            .map_err(|_| bad(line_no, "bad ped_lat_m"))?;
        out.push((t, d, lat));
    }
    Ok(out)
}
