//! The gaze pipeline from camera frame to click, as one streaming object.

use serde::{Deserialize, Serialize};

use crate::calib::{CalibError, CalibrationModel, GazeMapper, GazeSample};
use crate::dwell::{ClickEvent, DwellClicker, DwellConfig, Layout};
use crate::filter::{detect_fixations, BlinkHolder, FilterConfig, GazeEvent, MedianSmoother};
use crate::pupil::{detect, DetectorConfig, PupilObservation};
use crate::sim::EyeFrame;

use super::HarnessError;

/// Settings for every stage after the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    /// Occluded observations below this confidence map to invalid samples.
    pub confidence_floor: f64,
    pub filter: FilterConfig,
    pub dwell: DwellConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            confidence_floor: 0.5,
            filter: FilterConfig::default(),
            dwell: DwellConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.detector.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.filter.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.dwell.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(HarnessError::Config(format!("confidence_floor {} outside [0, 1]", self.confidence_floor)));
        }
        Ok(())
    }
}

/// What one input produced.
#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub observation: Option<PupilObservation>,
    /// Filtered samples released by this input (possibly older ones).
    pub samples: Vec<GazeSample>,
    pub clicks: Vec<ClickEvent>,
}

/// detect → map → blink hold → moving median → dwell click.
#[derive(Debug, Clone)]
pub struct GazePipeline {
    detector: DetectorConfig,
    mapper: GazeMapper,
    filter: FilterConfig,
    holder: BlinkHolder,
    smoother: MedianSmoother,
    clicker: DwellClicker,
    cursor: Option<GazeSample>,
    log: Vec<GazeSample>,
}

impl GazePipeline {
    /// Refuses a model that did not pass the calibration gate.
    pub fn new(model: CalibrationModel, layout: Layout, cfg: &PipelineConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mut mapper = GazeMapper::new(cfg.confidence_floor);
        mapper.install(model)?;
        Self::with_mapper(mapper, layout, cfg)
    }

    /// Pipeline without a camera, fed through [`Self::push_sample`].
    pub fn without_camera(layout: Layout, cfg: &PipelineConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        Self::with_mapper(GazeMapper::new(cfg.confidence_floor), layout, cfg)
    }

    fn with_mapper(mapper: GazeMapper, layout: Layout, cfg: &PipelineConfig) -> Result<Self, HarnessError> {
        let clicker = DwellClicker::new(layout, cfg.dwell.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Self {
            detector: cfg.detector.clone(),
            mapper,
            filter: cfg.filter.clone(),
            holder: BlinkHolder::new(cfg.filter.blink_hold),
            smoother: MedianSmoother::new(cfg.filter.smooth_window),
            clicker,
            cursor: None,
            log: Vec::new(),
        })
    }

    pub fn process_frame(&mut self, frame: &EyeFrame) -> Result<StepOutput, CalibError> {
        let observation = detect(frame, &self.detector);
        let sample = self.mapper.map(frame.timestamp(), observation.as_ref())?;
        let mut out = self.push_sample(sample);
        out.observation = observation;
        Ok(out)
    }

    /// Feeds a screen-space sample, bypassing detection and mapping.
    pub fn push_sample(&mut self, sample: GazeSample) -> StepOutput {
        let held = self.holder.push(sample);
        let smoothed: Vec<GazeSample> = held.into_iter().flat_map(|s| self.smoother.push(s)).collect();
        self.release(smoothed)
    }

    /// Drains every stage; call at the end of a stream.
    pub fn flush(&mut self) -> StepOutput {
        let mut smoothed: Vec<GazeSample> = self.holder.flush().into_iter().flat_map(|s| self.smoother.push(s)).collect();
        smoothed.extend(self.smoother.flush());
        self.release(smoothed)
    }

    fn release(&mut self, samples: Vec<GazeSample>) -> StepOutput {
        let mut clicks = Vec::new();
        for s in &samples {
            clicks.extend(self.clicker.step(s));
            if s.valid {
                self.cursor = Some(*s);
            }
        }
        self.log.extend_from_slice(&samples);
        StepOutput { observation: None, samples, clicks }
    }

    /// Latest valid filtered sample, which is what the cursor shows.
    pub fn cursor(&self) -> Option<GazeSample> {
        self.cursor
    }

    pub fn clicker(&self) -> &DwellClicker {
        &self.clicker
    }

    /// Every filtered sample released so far.
    pub fn gaze_log(&self) -> &[GazeSample] {
        &self.log
    }

    /// Fixation/saccade/blink events over the gaze log.
    pub fn events(&self) -> Vec<GazeEvent> {
        detect_fixations(&self.log, &self.filter).unwrap_or_default()
    }

    /// Clears all streaming state but keeps the calibration.
    pub fn reset(&mut self) {
        self.holder = BlinkHolder::new(self.filter.blink_hold);
        self.smoother = MedianSmoother::new(self.filter.smooth_window);
        self.clicker.reset();
        self.cursor = None;
        self.log.clear();
    }
}

/// Result of replaying a recorded scanpath.
#[derive(Debug, Clone)]
pub struct Replay {
    pub samples: Vec<GazeSample>,
    pub events: Vec<GazeEvent>,
    pub clicks: Vec<ClickEvent>,
}

/// Runs screen-space samples through blink hold, smoothing, event
/// segmentation and dwell clicking.
pub fn replay_scanpath(samples: &[GazeSample], layout: Layout, cfg: &PipelineConfig) -> Result<Replay, HarnessError> {
    if let Some(i) = samples.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(HarnessError::Config(format!(
            "scanpath timestamps must strictly increase (row {} at {} ms)",
            i + 2,
            samples[i + 1].timestamp
        )));
    }
    let mut p = GazePipeline::without_camera(layout, cfg)?;
    let mut clicks = Vec::new();
    for &s in samples {
        clicks.extend(p.push_sample(s).clicks);
    }
    clicks.extend(p.flush().clicks);
    let events = p.events();
    Ok(Replay { samples: p.log, events, clicks })
}
