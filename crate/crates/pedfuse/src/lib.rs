//! Frontal pedestrian detection by fusing a webcam with a three-beam
//! short-range lidar.

pub mod calib;
pub mod fusion;
pub mod lidar;
pub mod runner;
pub mod sim;
pub mod vision;

pub use calib::{CalibError, CalibrationArtifact, DistancePoly, SpatialMap, TriggerClock};
pub use fusion::{EnvSignal, FusedOutput, FusionParams, FusionState, MainSensor, Warning};
pub use lidar::{ChannelHistory, Detection, GateResult, LidarChannel, LidarScan, Source};
pub use runner::{cmd_calibrate, cmd_replay, cmd_run, RunReport, RunnerError};
pub use sim::{Scenario, ScenarioConfig, ScenarioKind, SimError, WorldState};
pub use vision::{CameraParams, CameraTrackState, Corner, FlowStatus, FlowVector, GrayFrame, RoiMask};
