//! Live messenger session: the simulated user works through a script of
//! targets while the pipeline turns its eye frames into clicks. A pointer
//! override (mouse fallback from the UI) temporarily replaces the camera.

use std::collections::VecDeque;

use crate::calib::{CalibrationModel, GazeSample};
use crate::config::Config;
use crate::dwell::ClickEvent;
use crate::geom::{Millis, Point, ScreenSize};
use crate::messenger::{speak_events, Messenger, OutboundEvent, SpeechSink};

use super::agent::{Agent, AgentConfig};
use super::experiment::derive_seed;
use super::eye::EyeModelConfig;
use super::pipeline::GazePipeline;
use super::HarnessError;

const STREAM_LIVE: u64 = 11;

struct Step {
    target: String,
    agent: Agent,
    started: Millis,
}

pub struct LiveSession {
    eye: EyeModelConfig,
    screen: ScreenSize,
    distance_in: f64,
    agent_cfg: AgentConfig,
    seed: u64,
    pipeline: GazePipeline,
    messenger: Messenger,
    sink: Box<dyn SpeechSink + Send>,
    script: VecDeque<String>,
    step: Option<Step>,
    steps_started: u64,
    step_timeout_ms: Millis,
    pointer_hold_ms: Millis,
    pointer: Option<(Point, Millis)>,
    gaze: Point,
    frame: u64,
    clicks: Vec<ClickEvent>,
}

impl LiveSession {
    /// Starts a session with a passing calibration for the configured user.
    pub fn new(cfg: &Config, model: CalibrationModel, sink: Box<dyn SpeechSink + Send>) -> Result<Self, HarnessError> {
        let layout = cfg.messenger_layout().map_err(|e| HarnessError::Config(e.to_string()))?;
        let pipeline = GazePipeline::new(model, layout.dwell_layout(), &cfg.pipeline())?;
        let screen = cfg.screen_size;
        Ok(Self {
            eye: cfg.experiment.eye.clone(),
            screen,
            distance_in: cfg.run.distance_in,
            agent_cfg: cfg.experiment.agent.clone(),
            seed: cfg.experiment.seed,
            pipeline,
            messenger: Messenger::new(layout),
            sink,
            script: cfg.run.script.iter().cloned().collect(),
            step: None,
            steps_started: 0,
            step_timeout_ms: cfg.run.step_timeout_ms,
            pointer_hold_ms: cfg.run.pointer_hold_ms,
            pointer: None,
            gaze: rest_point(screen),
            frame: 0,
            clicks: Vec::new(),
        })
    }

    /// Timestamp of the next frame.
    pub fn now(&self) -> Millis {
        self.eye.frame_time(self.frame)
    }

    pub fn frame_interval_ms(&self) -> f64 {
        1000.0 / self.eye.frame_rate
    }

    pub fn messenger(&self) -> &Messenger {
        &self.messenger
    }

    pub fn clicks(&self) -> &[ClickEvent] {
        &self.clicks
    }

    pub fn pipeline(&self) -> &GazePipeline {
        &self.pipeline
    }

    pub fn sink(&self) -> &dyn SpeechSink {
        self.sink.as_ref()
    }

    pub fn script_done(&self) -> bool {
        self.step.is_none() && self.script.is_empty()
    }

    /// Steers the cursor directly for the configured hold time.
    pub fn pointer_override(&mut self, p: Point) {
        let (p, _) = self.screen.clamp(p);
        self.pointer = Some((p, self.now() + self.pointer_hold_ms));
    }

    /// Advances one frame and returns the events for the UI in order: any
    /// messenger events from clicks, then the cursor.
    pub fn step(&mut self) -> Result<Vec<OutboundEvent>, HarnessError> {
        let t = self.now();
        self.frame += 1;

        let out = match self.pointer {
            Some((p, until)) if t < until => self.pipeline.push_sample(GazeSample::valid(t, p.x, p.y)),
            _ => {
                self.pointer = None;
                let eye_open = self.drive_agent(t);
                let pupil = eye_open.then(|| self.eye.pupil_for(self.screen, self.distance_in, self.gaze));
                let mut appearance = self.eye.appearance.clone();
                appearance.seed = derive_seed(self.seed, STREAM_LIVE, 0);
                self.pipeline.process_frame(&appearance.render(pupil, t))?
            }
        };

        let mut events = Vec::new();
        for click in out.clicks {
            let ev = self.messenger.click(&click.target_id).map_err(|e| HarnessError::Config(e.to_string()))?;
            speak_events(self.sink.as_mut(), &ev);
            events.extend(ev);
            if self.step.as_ref().is_some_and(|s| s.target == click.target_id) {
                self.step = None;
            }
            self.clicks.push(click);
        }
        if let Some(c) = self.pipeline.cursor() {
            events.push(OutboundEvent::Cursor { t: c.timestamp, x: c.x, y: c.y, valid: c.valid });
        }
        Ok(events)
    }

    /// Moves the simulated eye; returns whether it is open.
    fn drive_agent(&mut self, t: Millis) -> bool {
        if let Some(s) = &self.step {
            if t - s.started > self.step_timeout_ms {
                log::warn!("giving up on {} after {} ms", s.target, self.step_timeout_ms);
                self.step = None;
            }
        }
        if self.step.is_none() {
            if let Some(target) = self.script.pop_front() {
                let rect = self
                    .messenger
                    .layout()
                    .regions()
                    .into_iter()
                    .find(|r| r.id == target)
                    .map(|r| r.rect)
                    .expect("script validated against the layout");
                let i = self.steps_started;
                self.steps_started += 1;
                let seeds = [1, 2, 3].map(|k| derive_seed(self.seed, STREAM_LIVE + k, i));
                let agent = Agent::new(self.agent_cfg.clone(), self.gaze, rect, 0.0, seeds);
                self.step = Some(Step { target, agent, started: t });
            }
        }
        match &mut self.step {
            Some(s) => {
                let f = s.agent.step(t - s.started, self.pipeline.cursor().map(|c| c.pos()));
                self.gaze = f.gaze;
                f.eye_open
            }
            None => {
                self.gaze = rest_point(self.screen);
                true
            }
        }
    }
}

/// Where the user looks between selections: the composed-text strip, which
/// holds no targets.
fn rest_point(screen: ScreenSize) -> Point {
    Point::new(screen.w as f64 * 0.35, screen.h as f64 * 0.08)
}
