//! Sensor fusion policy and warning levels.
//!
//! The fused pipeline picks a main sensor per frame: the lidar owns the
//! near band (strictly below 9 m), the camera owns 9 m and beyond, a dark
//! or feature-starved frame hands the camera's responsibility to the
//! lidar, and a short persistence window bridges dropouts with the most
//! conservative recently seen distance. Output distances below 10 m raise
//! a red warning; 10 m and beyond, yellow.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lidar::{Detection, Source};

/// Below this fused-input lidar distance the lidar is the main sensor;
/// at and above it the camera takes over when both sensors report.
pub const BAND_SWITCH_M: f64 = 9.0;
/// Warning boundary: distances at or beyond it are level 1 (yellow),
/// strictly below it level 2 (red).
pub const WARN_BOUNDARY_M: f64 = 10.0;
/// Default mean-intensity floor below which the camera is not trusted.
pub const DARK_THRESHOLD_DEFAULT: f64 = 30.0;
/// Default minimum corner count for a trustworthy camera frame.
pub const MIN_CORNERS_DEFAULT: usize = 8;
/// Default fallback persistence window, 10 frames at 30 fps.
pub const PERSISTENCE_WINDOW_S: f64 = 0.33;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("{path}:{line}: {what}")]
    Schema {
        path: String,
        line: usize,
        what: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which source produced the fused distance this frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MainSensor {
    Lidar,
    Camera,
    Fallback,
    None,
}

impl MainSensor {
    pub fn as_str(&self) -> &'static str {
        match self {
            MainSensor::Lidar => "lidar",
            MainSensor::Camera => "camera",
            MainSensor::Fallback => "fallback",
            MainSensor::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<MainSensor> {
        match s {
            "lidar" => Some(MainSensor::Lidar),
            "camera" => Some(MainSensor::Camera),
            "fallback" => Some(MainSensor::Fallback),
            "none" => Some(MainSensor::None),
            _ => None,
        }
    }
}

/// Driver warning level, serialized with the HMI colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Warning {
    NoWarning,
    Level1Yellow,
    Level2Red,
}

impl Warning {
    pub fn as_str(&self) -> &'static str {
        match self {
            Warning::NoWarning => "none",
            Warning::Level1Yellow => "yellow",
            Warning::Level2Red => "red",
        }
    }

    pub fn parse(s: &str) -> Option<Warning> {
        match s {
            "none" => Some(Warning::NoWarning),
            "yellow" => Some(Warning::Level1Yellow),
            "red" => Some(Warning::Level2Red),
            _ => None,
        }
    }
}

/// Per-frame camera health: ambient light proxy and feature richness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSignal {
    /// Mean pixel intensity of the raw frame, 0 to 255.
    pub mean_intensity: f64,
    /// Corners found by the detection pipeline in this frame pair.
    pub corner_count: usize,
}

/// True when the camera can be believed: the frame is bright enough and
/// carries enough corner features.
pub fn camera_trusted(env: &EnvSignal, dark_threshold: f64, min_corners: usize) -> bool {
    env.mean_intensity >= dark_threshold && env.corner_count >= min_corners
}

/// Warning from a fused distance: red strictly below 10 m, yellow at and
/// beyond it, none when there is no distance.
pub fn warn_level(distance_m: Option<f64>) -> Warning {
    match distance_m {
        None => Warning::NoWarning,
        Some(d) if d < WARN_BOUNDARY_M => Warning::Level2Red,
        Some(_) => Warning::Level1Yellow,
    }
}

/// Tunable fusion thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub dark_threshold: f64,
    pub min_corners: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            dark_threshold: DARK_THRESHOLD_DEFAULT,
            min_corners: MIN_CORNERS_DEFAULT,
        }
    }
}

/// Rolling record of recent valid fused outputs, used for the fallback
/// branch. Only sensor-backed outputs enter the window; fallback outputs
/// never extend their own life.
#[derive(Debug, Clone)]
pub struct FusionState {
    recent: VecDeque<(f64, f64, Source)>,
    pub persistence_window_s: f64,
}

impl Default for FusionState {
    fn default() -> Self {
        FusionState::new(PERSISTENCE_WINDOW_S)
    }
}

impl FusionState {
    pub fn new(persistence_window_s: f64) -> Self {
        assert!(persistence_window_s > 0.0);
        FusionState {
            recent: VecDeque::new(),
            persistence_window_s,
        }
    }

    /// The most recent sensor-backed output, if any is still in memory.
    pub fn last_valid(&self) -> Option<(f64, f64, Source)> {
        self.recent.back().map(|&(t, d, s)| (d, t, s))
    }

    fn note_valid(&mut self, t_s: f64, distance_m: f64, source: Source) {
        self.recent.push_back((t_s, distance_m, source));
        while let Some(&(t0, _, _)) = self.recent.front() {
            if t_s - t0 >= self.persistence_window_s {
                self.recent.pop_front();
            } else {
                break;
            }
        }
    }

    /// Minimum distance among outputs fresher than the persistence window.
    fn fallback_distance(&self, t_s: f64) -> Option<f64> {
        self.recent
            .iter()
            .filter(|&&(t0, _, _)| t_s - t0 < self.persistence_window_s)
            .map(|&(_, d, _)| d)
            .fold(None, |acc: Option<f64>, d| {
                Some(acc.map_or(d, |a| a.min(d)))
            })
    }
}

/// One fused frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutput {
    pub t_s: f64,
    pub distance_m: Option<f64>,
    pub main_sensor: MainSensor,
    pub warning: Warning,
    /// The lidar input as received, for the log.
    pub lidar_raw_m: Option<f64>,
    /// The camera input as received (already in the lidar frame), logged
    /// even when the trust check discarded it.
    pub camera_raw_m: Option<f64>,
}

/// Fuses one frame.
///
/// `camera_cio` must already be mapped into the lidar distance frame.
/// Decision order: an untrusted camera is discarded first; with both
/// sensors present the lidar wins strictly below 9 m, otherwise the
/// camera; a single present sensor is used as-is; with neither, the
/// minimum distance seen within the persistence window is reported as
/// fallback, and after the window expires there is no output. Sensor
/// outcomes update the state; fallback outcomes do not.
pub fn fuse(
    lidar_cio: Option<&Detection>,
    camera_cio: Option<&Detection>,
    env: &EnvSignal,
    params: &FusionParams,
    state: &mut FusionState,
    t_s: f64,
) -> FusedOutput {
    let lidar_raw_m = lidar_cio.map(|d| d.distance_m);
    let camera_raw_m = camera_cio.map(|d| d.distance_m);
    let camera = if camera_trusted(env, params.dark_threshold, params.min_corners) {
        camera_cio
    } else {
        None
    };

    let decided: Option<(MainSensor, f64, Source)> = match (lidar_cio, camera) {
        (Some(l), Some(c)) => {
            if l.distance_m < BAND_SWITCH_M {
                Some((MainSensor::Lidar, l.distance_m, Source::Lidar))
            } else {
                Some((MainSensor::Camera, c.distance_m, Source::Camera))
            }
        }
        (Some(l), None) => Some((MainSensor::Lidar, l.distance_m, Source::Lidar)),
        (None, Some(c)) => Some((MainSensor::Camera, c.distance_m, Source::Camera)),
        (None, None) => None,
    };

    let (main_sensor, distance_m) = match decided {
        Some((main, d, source)) => {
            state.note_valid(t_s, d, source);
            (main, Some(d))
        }
        None => match state.fallback_distance(t_s) {
            Some(d) => (MainSensor::Fallback, Some(d)),
            None => (MainSensor::None, None),
        },
    };

    FusedOutput {
        t_s,
        distance_m,
        main_sensor,
        warning: warn_level(distance_m),
        lidar_raw_m,
        camera_raw_m,
    }
}

pub const FUSION_HEADER: &str = "t_s,main,distance_m,warning,lidar_raw_m,camera_raw_m";

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Streaming CSV writer for fusion logs.
pub struct FusionCsvWriter {
    out: BufWriter<fs::File>,
}

impl FusionCsvWriter {
    pub fn create(path: &Path) -> Result<Self, FusionError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{FUSION_HEADER}")?;
        Ok(FusionCsvWriter { out })
    }

    pub fn write_output(&mut self, o: &FusedOutput) -> Result<(), FusionError> {
        writeln!(
            self.out,
            "{},{},{},{},{},{}",
            o.t_s,
            o.main_sensor.as_str(),
            opt_f64(o.distance_m),
            o.warning.as_str(),
            opt_f64(o.lidar_raw_m),
            opt_f64(o.camera_raw_m),
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), FusionError> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_fusion_csv(path: &Path, rows: &[FusedOutput]) -> Result<(), FusionError> {
    let mut w = FusionCsvWriter::create(path)?;
    for row in rows {
        w.write_output(row)?;
    }
    w.finish()
}

pub fn read_fusion_csv(path: &Path) -> Result<Vec<FusedOutput>, FusionError> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, what: &str| FusionError::Schema {
        path: path.display().to_string(),
        line,
        what: what.to_string(),
    };
    let parse_opt = |s: &str, line: usize, what: &str| -> Result<Option<f64>, FusionError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| err(line, what))
        }
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == FUSION_HEADER => {}
        _ => return Err(err(1, "bad header")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(line_no, "expected 6 fields"));
        }
        let t_s: f64 = fields[0].parse().map_err(|_| err(line_no, "bad t_s"))?;
        let main_sensor =
            MainSensor::parse(fields[1]).ok_or_else(|| err(line_no, "bad main sensor"))?;
        let distance_m = parse_opt(fields[2], line_no, "bad distance_m")?;
        let warning = Warning::parse(fields[3]).ok_or_else(|| err(line_no, "bad warning"))?;
        let lidar_raw_m = parse_opt(fields[4], line_no, "bad lidar_raw_m")?;
        let camera_raw_m = parse_opt(fields[5], line_no, "bad camera_raw_m")?;
        out.push(FusedOutput {
            t_s,
            distance_m,
            main_sensor,
            warning,
            lidar_raw_m,
            camera_raw_m,
        });
    }
    Ok(out)
}

pub const ENV_HEADER: &str = "t_s,mean_intensity,corner_count";

/// Streaming CSV writer for the per-frame environment signal.
pub struct EnvCsvWriter {
    out: BufWriter<fs::File>,
}

impl EnvCsvWriter {
    pub fn create(path: &Path) -> Result<Self, FusionError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{ENV_HEADER}")?;
        Ok(EnvCsvWriter { out })
    }

    pub fn write_signal(&mut self, t_s: f64, env: &EnvSignal) -> Result<(), FusionError> {
        writeln!(self.out, "{},{},{}", t_s, env.mean_intensity, env.corner_count)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), FusionError> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_env_csv(path: &Path) -> Result<Vec<(f64, EnvSignal)>, FusionError> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, what: &str| FusionError::Schema {
        path: path.display().to_string(),
        line,
        what: what.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == ENV_HEADER => {}
        _ => return Err(err(1, "bad header")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(err(line_no, "expected 3 fields"));
        }
        let t_s: f64 = fields[0].parse().map_err(|_| err(line_no, "bad t_s"))?;
        let mean_intensity: f64 = fields[1]
            .parse()
            .map_err(|_| err(line_no, "bad mean_intensity"))?;
        let corner_count: usize = fields[2]
            .parse()
            .map_err(|_| err(line_no, "bad corner_count"))?;
        out.push((
            t_s,
            EnvSignal {
                mean_intensity,
                corner_count,
            },
        ));
    }
    Ok(out)
}
