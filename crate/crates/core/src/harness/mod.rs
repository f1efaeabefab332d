//! Closed-loop harness: a simulated user drives the whole pipeline so that
//! click-time experiments can be rerun deterministically.

pub mod agent;
pub mod experiment;
pub mod live;
pub mod eye;
pub mod pipeline;
pub mod stats;

use thiserror::Error;

use crate::calib::CalibError;

pub use agent::{Agent, AgentConfig, AgentFrame};
pub use experiment::{
    calibrate_user, calibration_outcome, run_angle_series, run_distance_series, run_experiment, ExperimentConfig, ExperimentReport, Scenario, TrialRecord,
    TrialResult,
};
pub use eye::{EyeModelConfig, SimulatedUser};
pub use live::LiveSession;
pub use pipeline::{replay_scanpath, GazePipeline, PipelineConfig, Replay, StepOutput};
pub use stats::average_trials;

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Calibration(#[from] CalibError),
    #[error("calibration required: rms {rms_px:.2} px exceeds the {threshold_px:.2} px gate")]
    CalibrationFailed { rms_px: f64, threshold_px: f64 },
}
