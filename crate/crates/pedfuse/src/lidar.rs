//! Three-beam short-range lidar: per-channel false-alarm gating, closest
//! in-path object selection and beam-footprint projection into the image.
//!
//! Each channel keeps the last 30 accepted returns. A new return is checked
//! against the constant-velocity prediction from that history; anything
//! farther than twice the datasheet sigma (scaled by the prediction's
//! leverage) is treated as a false alarm and dropped. For a stationary
//! target this rejects the textbook 2-sigma tail fraction of about 4.6%,
//! while a target closing at driving speed stays tracked because the
//! prediction follows the trend instead of lagging behind a window mean.
//! Ten rejections in a row mean the signal genuinely moved, so the history
//! is cleared and the channel re-locks within a few returns.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// Datasheet standard deviation of a single SRL channel, meters.
pub const LIDAR_SIGMA_M: f64 = 0.10;
/// Returns accepted per channel before gating kicks in.
pub const GATE_BOOTSTRAP: usize = 5;
/// Accepted-return history per channel.
pub const GATE_WINDOW: usize = 30;
/// Consecutive rejections that clear a channel history.
pub const GATE_CLEAR_AFTER: usize = 10;

#[derive(Debug, Error)]
pub enum LidarError {
    #[error("{path}:{line}: {what}")]
    Schema {
        path: String,
        line: usize,
        what: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One beam's return within a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarChannel {
    pub range_m: f64,
    pub valid: bool,
}

impl LidarChannel {
    pub fn none() -> Self {
        LidarChannel {
            range_m: 0.0,
            valid: false,
        }
    }
}

/// One 3-channel scan. Channel 0 looks left of boresight, 1 straight
/// ahead, 2 right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarScan {
    pub t_s: f64,
    pub channels: [LidarChannel; 3],
}

impl LidarScan {
    /// Scan with no returns, handy for tests and warm-up frames.
    pub fn invalid(t_s: f64) -> Self {
        LidarScan {
            t_s,
            channels: [LidarChannel::none(); 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateResult {
    Accepted,
    Rejected,
}

/// Where a detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Lidar,
    Camera,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Lidar => "lidar",
            Source::Camera => "camera",
        }
    }

    pub fn parse(s: &str) -> Option<Source> {
        match s {
            "lidar" => Some(Source::Lidar),
            "camera" => Some(Source::Camera),
            _ => None,
        }
    }
}

/// A gated range observation from either sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub t_s: f64,
    pub distance_m: f64,
    pub source: Source,
    /// Pixel column interval the detection occupies, when known.
    pub lateral_px: Option<(f64, f64)>,
}

/// Accepted-return history of one channel.
#[derive(Debug, Clone, Default)]
pub struct ChannelHistory {
    window: VecDeque<(f64, f64)>,
    consecutive_rejections: usize,
}

impl ChannelHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Gates one return against this history. Accepted samples enter the
    /// window (displacing the oldest); rejected ones never do.
    pub fn gate(&mut self, t_s: f64, sample_m: f64) -> GateResult {
        self.gate_with_sigma(t_s, sample_m, LIDAR_SIGMA_M)
    }

    pub fn gate_with_sigma(&mut self, t_s: f64, sample_m: f64, sigma_m: f64) -> GateResult {
        if self.window.len() >= GATE_BOOTSTRAP {
            let (pred, leverage) = self.predict(t_s);
            if (sample_m - pred).abs() > 2.0 * sigma_m * leverage.sqrt() {
                self.consecutive_rejections += 1;
                if self.consecutive_rejections >= GATE_CLEAR_AFTER {
                    self.window.clear();
                    self.consecutive_rejections = 0;
                }
                return GateResult::Rejected;
            }
        }
        if self.window.len() == GATE_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back((t_s, sample_m));
        self.consecutive_rejections = 0;
        GateResult::Accepted
    }

    /// Constant-velocity prediction at time `t` plus its leverage factor
    /// (variance of sample minus prediction, in units of sigma squared).
    fn predict(&self, t: f64) -> (f64, f64) {
        let n = self.window.len() as f64;
        let tbar = self.window.iter().map(|e| e.0).sum::<f64>() / n;
        let rbar = self.window.iter().map(|e| e.1).sum::<f64>() / n;
        let mut stt = 0.0;
        let mut str_ = 0.0;
        for &(ti, ri) in &self.window {
            stt += (ti - tbar) * (ti - tbar);
            str_ += (ti - tbar) * (ri - rbar);
        }
        if stt > 1e-12 {
            let slope = str_ / stt;
            let dt = t - tbar;
            (rbar + slope * dt, 1.0 + 1.0 / n + dt * dt / stt)
        } else {
            (rbar, 1.0 + 1.0 / n)
        }
    }
}

/// Per-channel gate verdicts for one scan.
pub type ScanVerdicts = [GateResult; 3];

/// Gating state across all three channels.
#[derive(Debug, Clone, Default)]
pub struct LidarTracker {
    pub channels: [ChannelHistory; 3],
    rejected_total: u64,
}

impl LidarTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Gates every valid channel of a scan. Invalid channels are reported
    /// as rejected and never touch the histories.
    pub fn ingest(&mut self, scan: &LidarScan) -> ScanVerdicts {
        let mut verdicts = [GateResult::Rejected; 3];
        for (i, ch) in scan.channels.iter().enumerate() {
            if ch.valid {
                verdicts[i] = self.channels[i].gate(scan.t_s, ch.range_m);
                if verdicts[i] == GateResult::Rejected {
                    self.rejected_total += 1;
                }
            }
        }
        verdicts
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected_total
    }
}

/// Closest in-path object: the minimum range over channels that are both
/// valid and gate-accepted. Ties keep the lowest channel index.
pub fn select_cio(scan: &LidarScan, verdicts: &ScanVerdicts) -> Option<Detection> {
    let mut best: Option<f64> = None;
    for (ch, verdict) in scan.channels.iter().zip(verdicts) {
        if ch.valid && *verdict == GateResult::Accepted {
            if best.map_or(true, |b| ch.range_m < b) {
                best = Some(ch.range_m);
            }
        }
    }
    best.map(|distance_m| Detection {
        t_s: scan.t_s,
        distance_m,
        source: Source::Lidar,
        lateral_px: None,
    })
}

/// Pixel column interval covered by the lidar's field of view under a
/// shared-boresight pinhole camera.
///
/// Both fields of view are horizontal full angles in degrees, with
/// `0 < lidar_hfov_deg <= camera_hfov_deg`.
pub fn project_cio_to_image(
    image_width_px: u32,
    camera_hfov_deg: f64,
    lidar_hfov_deg: f64,
) -> (u32, u32) {
    assert!(lidar_hfov_deg > 0.0 && lidar_hfov_deg <= camera_hfov_deg);
    let w = image_width_px as f64;
    let cx = w / 2.0;
    let f = cx / (camera_hfov_deg.to_radians() / 2.0).tan();
    let half = f * (lidar_hfov_deg.to_radians() / 2.0).tan();
    let lo = (cx - half).ceil().clamp(0.0, w - 1.0);
    let hi = (cx + half).floor().clamp(0.0, w - 1.0);
    if lo > hi {
        let c = cx.floor().clamp(0.0, w - 1.0);
        return (c as u32, c as u32);
    }
    (lo as u32, hi as u32)
}

const STREAM_HEADER: &str = "t_s,ch0_m,ch0_valid,ch1_m,ch1_valid,ch2_m,ch2_valid";

/// Incremental writer for the raw scan stream CSV.
pub struct LidarCsvWriter {
    out: BufWriter<fs::File>,
}

impl LidarCsvWriter {
    pub fn create(path: &Path) -> Result<Self, LidarError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{STREAM_HEADER}")?;
        Ok(LidarCsvWriter { out })
    }

    pub fn write_scan(&mut self, scan: &LidarScan) -> Result<(), LidarError> {
        let c = &scan.channels;
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            scan.t_s,
            c[0].range_m,
            c[0].valid as u8,
            c[1].range_m,
            c[1].valid as u8,
            c[2].range_m,
            c[2].valid as u8
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), LidarError> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_stream_csv(path: &Path, scans: &[LidarScan]) -> Result<(), LidarError> {
    let mut w = LidarCsvWriter::create(path)?;
    for s in scans {
        w.write_scan(s)?;
    }
    w.finish()
}

pub fn read_stream_csv(path: &Path) -> Result<Vec<LidarScan>, LidarError> {
    let name = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut scans = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        let schema = |what: String| LidarError::Schema {
            path: name.clone(),
            line: idx + 1,
            what,
        };
        if idx == 0 {
            if line != STREAM_HEADER {
                return Err(schema(format!("expected header \"{STREAM_HEADER}\"")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(schema(format!("expected 7 fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| schema(format!("bad {what} field \"{s}\"")))
        };
        let flag = |s: &str, what: &str| match s.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(schema(format!("bad {what} flag \"{other}\""))),
        };
        let mut channels = [LidarChannel::none(); 3];
        for ch in 0..3 {
            channels[ch] = LidarChannel {
                range_m: num(fields[1 + 2 * ch], "range")?,
                valid: flag(fields[2 + 2 * ch], "valid")?,
            };
        }
        scans.push(LidarScan {
            t_s: num(fields[0], "t_s")?,
            channels,
        });
    }
    Ok(scans)
}
