//! The global JSON configuration file.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected. Three environment variables override the file:
//! `EYEGUIDE_PORT`, `EYEGUIDE_SPEAKER` and `EYEGUIDE_UI_DIR`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::CalibrationConfig;
use crate::dwell::DwellConfig;
use crate::filter::FilterConfig;
use crate::geom::ScreenSize;
use crate::harness::{ExperimentConfig, PipelineConfig};
use crate::messenger::{load_templates, MessengerLayout, DEFAULT_TEMPLATES};
use crate::pupil::DetectorConfig;
use crate::sim::SimScenario;

pub const ENV_PORT: &str = "EYEGUIDE_PORT";
pub const ENV_SPEAKER: &str = "EYEGUIDE_SPEAKER";
pub const ENV_UI_DIR: &str = "EYEGUIDE_UI_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperConfig {
    /// Occluded observations below this confidence yield invalid samples.
    pub confidence_floor: f64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self { confidence_floor: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MessengerConfig {
    /// Inline templates; overrides `templates_file`.
    pub templates: Option<Vec<String>>,
    /// JSON file `{"templates": [...]}`, resolved against the config file's directory.
    pub templates_file: Option<PathBuf>,
    /// Text-to-speech command line; the text is appended as the last argument.
    pub speaker_command: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Static UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 8765, ui_dir: None }
    }
}

/// Live loop driven by a scripted simulated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub distance_in: f64,
    /// Target ids the simulated user selects in order.
    pub script: Vec<String>,
    /// Pace frames in wall-clock time; otherwise run as fast as possible.
    pub realtime: bool,
    /// Keep serving after the script finishes, until interrupted.
    pub keep_serving: bool,
    /// Give up on a script step after this long.
    pub step_timeout_ms: u64,
    /// Pointer overrides steer the cursor for this long after each message.
    pub pointer_hold_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            distance_in: 24.0,
            script: ["key:H", "key:E", "key:L", "key:P", "speak", "template-3"].map(String::from).to_vec(),
            realtime: true,
            keep_serving: false,
            step_timeout_ms: 20_000,
            pointer_hold_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub screen_size: ScreenSize,
    /// Scenario rendered by the `simulate` command.
    pub simulation: Option<SimScenario>,
    pub detector: DetectorConfig,
    pub calibration: CalibrationConfig,
    pub mapper: MapperConfig,
    pub filter: FilterConfig,
    pub dwell: DwellConfig,
    pub messenger: MessengerConfig,
    pub server: ServerConfig,
    pub experiment: ExperimentConfig,
    pub run: RunConfig,
    /// Directory of the file this was loaded from.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let mut c = Self {
            screen_size: ScreenSize::default(),
            simulation: None,
            detector: DetectorConfig::default(),
            calibration: CalibrationConfig::default(),
            mapper: MapperConfig::default(),
            filter: FilterConfig::default(),
            dwell: DwellConfig::default(),
            messenger: MessengerConfig::default(),
            server: ServerConfig::default(),
            experiment: ExperimentConfig::default(),
            run: RunConfig::default(),
            base_dir: None,
        };
        c.calibration.screen_size = c.screen_size;
        c
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut c: Config = serde_json::from_str(text)?;
        c.calibration.screen_size = c.screen_size;
        Ok(c)
    }

    /// Reads `path` (or defaults when `None`), applies the process
    /// environment and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
                let mut c = Self::from_json(&text)?;
                c.base_dir = p.parent().map(Path::to_path_buf);
                c
            }
            None => Self::default(),
        };
        c.apply_env(|k| std::env::var(k).ok())?;
        c.validate()?;
        Ok(c)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(p) = var(ENV_PORT) {
            self.server.port = p.trim().parse().map_err(|_| ConfigError::Invalid(format!("{ENV_PORT}={p:?} is not a port")))?;
        }
        if let Some(s) = var(ENV_SPEAKER) {
            self.messenger.speaker_command = (!s.trim().is_empty()).then_some(s);
        }
        if let Some(d) = var(ENV_UI_DIR) {
            self.server.ui_dir = Some(PathBuf::from(d));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        if self.screen_size.w < 100 || self.screen_size.h < 100 {
            return Err(invalid(format!("screen_size {}x{} is too small", self.screen_size.w, self.screen_size.h)));
        }
        if let Some(s) = &self.simulation {
            s.validate().map_err(|e| invalid(e.to_string()))?;
        }
        self.pipeline().validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.calibration.pass_threshold > 0.0) || self.calibration.settle_ms >= self.calibration.dwell_per_target_ms {
            return Err(invalid("calibration needs a positive pass_threshold and settle_ms < dwell_per_target_ms".into()));
        }
        self.experiment.validate(self.screen_size).map_err(|e| invalid(e.to_string()))?;
        if !(self.run.distance_in > 0.0) {
            return Err(invalid("run.distance_in must be positive".into()));
        }
        let layout = self.messenger_layout().map_err(|e| invalid(e.to_string()))?;
        if let Some(bad) = self.run.script.iter().find(|id| !layout.regions().iter().any(|r| &r.id == *id)) {
            return Err(invalid(format!("run.script names unknown target {bad:?}")));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            detector: self.detector.clone(),
            confidence_floor: self.mapper.confidence_floor,
            filter: self.filter.clone(),
            dwell: self.dwell.clone(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn templates(&self) -> Result<Vec<String>, crate::messenger::MessengerError> {
        if let Some(t) = &self.messenger.templates {
            return Ok(t.clone());
        }
        match &self.messenger.templates_file {
            Some(f) => load_templates(&self.resolve(f)),
            None => Ok(DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect()),
        }
    }

    pub fn messenger_layout(&self) -> Result<MessengerLayout, crate::messenger::MessengerError> {
        MessengerLayout::generate(self.screen_size, &self.templates()?)
    }
}
