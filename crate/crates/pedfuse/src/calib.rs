//! Calibration of the camera distance curve and the camera/lidar mapping.
//!
//! Three concerns live here:
//!
//! * the degree-8 polynomial that converts a pixel row at the bottom of a
//!   detected object into a longitudinal distance (`DistancePoly`),
//! * the piecewise-linear map that carries camera distances into the lidar
//!   frame (`SpatialMap`), built from paired readings of a reference target,
//! * trigger alignment between the 30 fps camera and the 100 Hz lidar
//!   (`TriggerClock`).
//!
//! The polynomial is fitted on a normalized coordinate
//! `u = (y - y_center) / y_scale`, never on raw pixel rows: a degree-8
//! Vandermonde on y in [0, 480] is far too ill-conditioned for a direct
//! solve. The least-squares problem itself is solved with Householder
//! reflections rather than normal equations.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lidar::LidarScan;

/// Polynomial degree of the distance curve. Nine coefficients.
pub const POLY_DEGREE: usize = 8;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("need at least {need} samples to fit the distance curve, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("design matrix is rank deficient (samples do not constrain a degree-8 fit)")]
    DegenerateDesign,
    #[error("pixel row {y:.2} outside calibrated range [{lo:.2}, {hi:.2}]")]
    OutOfCalibratedRange { y: f64, lo: f64, hi: f64 },
    #[error("spatial map anchors must increase strictly in both coordinates")]
    NonMonotone,
    #[error("spatial map needs at least 2 anchor pairs, got {got}")]
    TooFewAnchors { got: usize },
    #[error("no lidar scan at or before frame time {frame_t:.4}")]
    NoScanAvailable { frame_t: f64 },
    #[error("{path}:{line}: {what}")]
    Schema {
        path: String,
        line: usize,
        what: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("calibration artifact: {0}")]
    BadArtifact(String),
}

/// Distance curve `x = a*u^8 + b*u^7 + ... + i` on the normalized row
/// coordinate `u = (y - y_center) / y_scale`.
///
/// `coeffs[0]` multiplies `u^8`, `coeffs[8]` is the constant term.
/// Evaluation outside the fitted row range is refused instead of
/// extrapolated; a degree-8 polynomial does nothing sensible out there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistancePoly {
    pub coeffs: [f64; 9],
    pub y_center: f64,
    pub y_scale: f64,
    #[serde(rename = "y_range")]
    pub valid_y_range: (f64, f64),
}

/// Residual summary of a distance-curve fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    pub rmse: f64,
}

/// Fits the distance curve to `(y_px, distance_m)` samples by least squares
/// on the normalized coordinate.
///
/// Needs at least 9 samples with not-all-identical rows. Returns the fitted
/// polynomial together with its per-sample residuals (fit minus sample).
pub fn fit_distance_poly(samples: &[(f64, f64)]) -> Result<(DistancePoly, FitReport), CalibError> {
    let n = samples.len();
    if n < POLY_DEGREE + 1 {
        return Err(CalibError::TooFewSamples {
            need: POLY_DEGREE + 1,
            got: n,
        });
    }
    let y_center = samples.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let y_scale = samples
        .iter()
        .map(|s| (s.0 - y_center).abs())
        .fold(0.0, f64::max);
    if y_scale == 0.0 {
        return Err(CalibError::DegenerateDesign);
    }

    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for &(y, d) in samples {
        let u = (y - y_center) / y_scale;
        let mut row = [0.0; 9];
        let mut p = 1.0;
        for k in (0..=POLY_DEGREE).rev() {
            row[k] = p;
            p *= u;
        }
        a.push(row);
        b.push(d);
    }
    let coeffs = householder_lstsq(&mut a, &mut b)?;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(y, _) in samples {
        lo = lo.min(y);
        hi = hi.max(y);
    }
    let poly = DistancePoly {
        coeffs,
        y_center,
        y_scale,
        valid_y_range: (lo, hi),
    };

    let mut residuals = Vec::with_capacity(n);
    let mut max_abs = 0.0f64;
    let mut sq = 0.0;
    for &(y, d) in samples {
        let r = poly.eval_unchecked(y) - d;
        max_abs = max_abs.max(r.abs());
        sq += r * r;
        residuals.push(r);
    }
    let report = FitReport {
        residuals,
        max_abs_residual: max_abs,
        rmse: (sq / n as f64).sqrt(),
    };
    Ok((poly, report))
}

impl DistancePoly {
    /// Distance in meters for a pixel row inside the calibrated range.
    pub fn eval_distance(&self, y_px: f64) -> Result<f64, CalibError> {
        let (lo, hi) = self.valid_y_range;
        if !(y_px >= lo && y_px <= hi) {
            return Err(CalibError::OutOfCalibratedRange { y: y_px, lo, hi });
        }
        Ok(self.eval_unchecked(y_px))
    }

    fn eval_unchecked(&self, y_px: f64) -> f64 {
        let u = (y_px - self.y_center) / self.y_scale;
        let mut acc = self.coeffs[0];
        for &c in &self.coeffs[1..] {
            acc = acc * u + c;
        }
        acc
    }

    fn validate(&self) -> Result<(), CalibError> {
        if !self.y_scale.is_finite() || self.y_scale <= 0.0 {
            return Err(CalibError::BadArtifact("y_scale must be positive".into()));
        }
        if !(self.valid_y_range.0 < self.valid_y_range.1) {
            return Err(CalibError::BadArtifact("empty y_range".into()));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(CalibError::BadArtifact("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Least squares via Householder QR. `a` holds the rows of the design
/// matrix, `b` the right-hand side; both are consumed as scratch space.
fn householder_lstsq(a: &mut [[f64; 9]], b: &mut [f64]) -> Result<[f64; 9], CalibError> {
    let m = a.len();
    let n = POLY_DEGREE + 1;
    debug_assert!(m >= n);
    for k in 0..n {
        let mut norm = 0.0;
        for i in k..m {
            norm += a[i][k] * a[i][k];
        }
        norm = norm.sqrt();
        if norm > 0.0 {
            let alpha = if a[k][k] >= 0.0 { -norm } else { norm };
            // Reflector v = x - alpha*e1, stored in place of column k.
            a[k][k] -= alpha;
            let mut vtv = 0.0;
            for i in k..m {
                vtv += a[i][k] * a[i][k];
            }
            if vtv > 0.0 {
                for j in k + 1..n {
                    let mut dot = 0.0;
                    for i in k..m {
                        dot += a[i][k] * a[i][j];
                    }
                    let s = 2.0 * dot / vtv;
                    for i in k..m {
                        a[i][j] -= s * a[i][k];
                    }
                }
                let mut dot = 0.0;
                for i in k..m {
                    dot += a[i][k] * b[i];
                }
                let s = 2.0 * dot / vtv;
                for i in k..m {
                    b[i] -= s * a[i][k];
                }
            }
            a[k][k] = alpha;
        }
    }
    let max_diag = (0..n).map(|k| a[k][k].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 {
        return Err(CalibError::DegenerateDesign);
    }
    let mut x = [0.0; 9];
    for k in (0..n).rev() {
        if a[k][k].abs() <= 1e-12 * max_diag {
            return Err(CalibError::DegenerateDesign);
        }
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    Ok(x)
}

/// Piecewise-linear map from camera distances to lidar-frame distances.
///
/// Anchors come from viewing a reference target with both sensors at the
/// same stations (1 m steps over 2 to 10 m in the stock procedure). Outside
/// the anchor span the nearest segment is extended linearly, so the map is
/// total and monotone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct SpatialMap {
    anchors: Vec<(f64, f64)>,
}

impl SpatialMap {
    /// Builds the map from `(camera_m, lidar_m)` pairs. Pairs are sorted by
    /// the camera coordinate; both coordinates must then increase strictly.
    pub fn build(pairs: &[(f64, f64)]) -> Result<Self, CalibError> {
        if pairs.len() < 2 {
            return Err(CalibError::TooFewAnchors { got: pairs.len() });
        }
        let mut anchors = pairs.to_vec();
        anchors.sort_by(|p, q| p.0.total_cmp(&q.0));
        for w in anchors.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(CalibError::NonMonotone);
            }
        }
        Ok(SpatialMap { anchors })
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    /// Camera-frame distance to lidar-frame distance.
    pub fn align_camera_to_lidar(&self, camera_m: f64) -> f64 {
        let a = &self.anchors;
        let seg = if camera_m <= a[0].0 {
            (a[0], a[1])
        } else if camera_m >= a[a.len() - 1].0 {
            (a[a.len() - 2], a[a.len() - 1])
        } else {
            let i = a.partition_point(|p| p.0 <= camera_m);
            (a[i - 1], a[i])
        };
        let ((c0, l0), (c1, l1)) = seg;
        l0 + (camera_m - c0) * (l1 - l0) / (c1 - c0)
    }
}

impl TryFrom<Vec<(f64, f64)>> for SpatialMap {
    type Error = CalibError;
    fn try_from(pairs: Vec<(f64, f64)>) -> Result<Self, CalibError> {
        SpatialMap::build(&pairs)
    }
}

impl From<SpatialMap> for Vec<(f64, f64)> {
    fn from(m: SpatialMap) -> Self {
        m.anchors
    }
}

/// Frame clock used to pair each camera frame with a lidar scan.
#[derive(Debug, Clone)]
pub struct TriggerClock {
    pub frame_period_s: f64,
    pub last_frame_time_s: f64,
}

impl TriggerClock {
    pub fn new(fps: f64) -> Self {
        TriggerClock {
            frame_period_s: 1.0 / fps,
            last_frame_time_s: f64::NEG_INFINITY,
        }
    }

    /// Picks the latest scan not after the frame time from a time-ordered
    /// stream. The camera trigger leads, so a frame never pairs with a scan
    /// from its future.
    pub fn align_lidar_to_frame<'a>(
        &mut self,
        frame_time_s: f64,
        stream: &'a [LidarScan],
    ) -> Result<&'a LidarScan, CalibError> {
        self.last_frame_time_s = frame_time_s;
        let mut ts_iter = stream.iter().map(|s| s.t_s);
        debug_assert!({
            let mut ok = true;
            if let Some(mut prev) = ts_iter.next() {
                for t in ts_iter {
                    ok &= t >= prev;
                    prev = t;
                }
            }
            ok
        });
        let i = stream.partition_point(|s| s.t_s <= frame_time_s);
        if i == 0 {
            return Err(CalibError::NoScanAvailable {
                frame_t: frame_time_s,
            });
        }
        Ok(&stream[i - 1])
    }
}

/// On-disk calibration: distance polynomial plus spatial map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub poly: DistancePoly,
    pub spatial_map: SpatialMap,
}

impl CalibrationArtifact {
    pub fn save(&self, path: &Path) -> Result<(), CalibError> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| CalibError::BadArtifact(e.to_string()))?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibError> {
        let text = fs::read_to_string(path)?;
        let artifact: CalibrationArtifact =
            serde_json::from_str(&text).map_err(|e| CalibError::BadArtifact(e.to_string()))?;
        artifact.poly.validate()?;
        Ok(artifact)
    }
}

/// Loads `(y_px, distance_m)` fitting samples from a CSV with the header
/// `y_px,distance_m`.
pub fn load_samples_csv(path: &Path) -> Result<Vec<(f64, f64)>, CalibError> {
    let name = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if idx == 0 {
            if line != "y_px,distance_m" {
                return Err(CalibError::Schema {
                    path: name,
                    line: 1,
                    what: format!("expected header \"y_px,distance_m\", got \"{line}\""),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let schema = |what: String| CalibError::Schema {
            path: name.clone(),
            line: idx + 1,
            what,
        };
        let y = it
            .next()
            .and_then(|f| f.trim().parse::<f64>().ok())
            .ok_or_else(|| schema("bad y_px field".into()))?;
        let d = it
            .next()
            .and_then(|f| f.trim().parse::<f64>().ok())
            .ok_or_else(|| schema("bad distance_m field".into()))?;
        if it.next().is_some() {
            return Err(schema("expected exactly 2 fields".into()));
        }
        out.push((y, d));
    }
    Ok(out)
}
