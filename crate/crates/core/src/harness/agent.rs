//! Simulated gaze agent for the click-time experiments.
//!
//! The agent looks at its start point for a reaction time, saccades to the
//! target icon with Gaussian landing error, then watches the on-screen
//! cursor. Whenever the cursor has sat outside the icon for a feedback delay
//! it makes a corrective saccade that compensates the observed cursor offset.
//! Fixations carry tremor and the eye blinks as a Poisson process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geom::{Millis, Point, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Latency of the first saccade after the trial starts.
    pub reaction_ms: Millis,
    pub saccade_speed_px_per_ms: f64,
    /// Landing error of the first saccade, per axis.
    pub landing_sigma_px: f64,
    /// Landing error of corrective saccades, per axis.
    pub correction_sigma_px: f64,
    /// How long the cursor must sit outside the icon before a correction.
    pub feedback_delay_ms: Millis,
    /// Fixational tremor, per axis per frame.
    pub tremor_px: f64,
    pub blink_rate_hz: f64,
    pub blink_ms: Millis,
    /// Landing errors grow by `1 + tilt_sigma_gain · |tilt| / 90°`.
    pub tilt_sigma_gain: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            reaction_ms: 200,
            saccade_speed_px_per_ms: 8.0,
            landing_sigma_px: 30.0,
            correction_sigma_px: 10.0,
            feedback_delay_ms: 250,
            tremor_px: 1.5,
            blink_rate_hz: 0.2,
            blink_ms: 150,
            tilt_sigma_gain: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        let non_neg = [
            ("landing_sigma_px", self.landing_sigma_px),
            ("correction_sigma_px", self.correction_sigma_px),
            ("tremor_px", self.tremor_px),
            ("blink_rate_hz", self.blink_rate_hz),
            ("tilt_sigma_gain", self.tilt_sigma_gain),
        ];
        if let Some((name, _)) = non_neg.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(format!("agent.{name} must be a finite non-negative number"));
        }
        if !(self.saccade_speed_px_per_ms > 0.0) {
            return Err("agent.saccade_speed_px_per_ms must be positive".into());
        }
        Ok(())
    }

    pub fn tilt_factor(&self, tilt_deg: f64) -> f64 {
        1.0 + self.tilt_sigma_gain * tilt_deg.abs().min(90.0) / 90.0
    }
}

/// Independent random streams, so that trials sharing a seed stay aligned
/// across experiment cells (common random numbers).
#[derive(Debug, Clone)]
struct Streams {
    landing: ChaCha8Rng,
    tremor: ChaCha8Rng,
    blink: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Waiting { until: Millis },
    Saccade { from: Point, to: Point, start: Millis, end: Millis },
    Fixating { aim: Point, outside_since: Option<Millis> },
}

/// What the eye does in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentFrame {
    pub gaze: Point,
    pub eye_open: bool,
}

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    start: Point,
    target: Rect,
    sigma_scale: f64,
    streams: Streams,
    phase: Phase,
    next_blink: Option<Millis>,
    blink_end: Millis,
    corrections: u32,
}

impl Agent {
    /// `seeds` feeds the landing, tremor and blink streams.
    pub fn new(cfg: AgentConfig, start: Point, target: Rect, tilt_deg: f64, seeds: [u64; 3]) -> Self {
        let mut streams = Streams {
            landing: ChaCha8Rng::seed_from_u64(seeds[0]),
            tremor: ChaCha8Rng::seed_from_u64(seeds[1]),
            blink: ChaCha8Rng::seed_from_u64(seeds[2]),
        };
        let next_blink = Self::draw_blink_gap(&cfg, &mut streams.blink);
        let sigma_scale = cfg.tilt_factor(tilt_deg);
        Self {
            phase: Phase::Waiting { until: cfg.reaction_ms },
            cfg,
            start,
            target,
            sigma_scale,
            streams,
            next_blink,
            blink_end: 0,
            corrections: 0,
        }
    }

    fn draw_blink_gap(cfg: &AgentConfig, rng: &mut ChaCha8Rng) -> Option<Millis> {
        (cfg.blink_rate_hz > 0.0).then(|| {
            let secs: f64 = Exp::new(cfg.blink_rate_hz).expect("positive rate").sample(rng);
            (secs * 1000.0) as Millis
        })
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn jitter(rng: &mut ChaCha8Rng, p: Point, sigma: f64) -> Point {
        Point::new(p.x + sigma * Self::normal(rng), p.y + sigma * Self::normal(rng))
    }

    fn saccade(&self, from: Point, to: Point, now: Millis) -> Phase {
        let ms = (from.distance(to) / self.cfg.saccade_speed_px_per_ms).ceil() as Millis;
        Phase::Saccade { from, to, start: now, end: now + ms.max(1) }
    }

    pub fn corrections(&self) -> u32 {
        self.corrections
    }

    /// Advances to time `t` given the cursor the user currently sees.
    pub fn step(&mut self, t: Millis, cursor: Option<Point>) -> AgentFrame {
        let eye_open = self.blink_state(t);
        let gaze = match self.phase {
            Phase::Waiting { until } if t < until => self.start,
            Phase::Waiting { .. } => {
                let aim = Self::jitter(&mut self.streams.landing, self.target.centre(), self.cfg.landing_sigma_px * self.sigma_scale);
                self.phase = self.saccade(self.start, aim, t);
                self.start
            }
            Phase::Saccade { from, to, start, end } => {
                if t >= end {
                    self.phase = Phase::Fixating { aim: to, outside_since: None };
                    to
                } else {
                    let f = (t - start) as f64 / (end - start) as f64;
                    Point::new(from.x + f * (to.x - from.x), from.y + f * (to.y - from.y))
                }
            }
            Phase::Fixating { aim, outside_since } => {
                match cursor {
                    Some(c) if !self.target.contains(c) => {
                        let since = outside_since.unwrap_or(t);
                        if t - since >= self.cfg.feedback_delay_ms {
                            let wanted = Point::new(aim.x + self.target.centre().x - c.x, aim.y + self.target.centre().y - c.y);
                            let next = Self::jitter(&mut self.streams.landing, wanted, self.cfg.correction_sigma_px * self.sigma_scale);
                            self.corrections += 1;
                            self.phase = self.saccade(aim, next, t);
                        } else {
                            self.phase = Phase::Fixating { aim, outside_since: Some(since) };
                        }
                    }
                    Some(_) => self.phase = Phase::Fixating { aim, outside_since: None },
                    None => {}
                }
                Self::jitter(&mut self.streams.tremor, aim, self.cfg.tremor_px)
            }
        };
        AgentFrame { gaze, eye_open }
    }

    fn blink_state(&mut self, t: Millis) -> bool {
        if t < self.blink_end {
            return false;
        }
        match self.next_blink {
            Some(at) if t >= at => {
                self.blink_end = t + self.cfg.blink_ms;
                self.next_blink = Self::draw_blink_gap(&self.cfg, &mut self.streams.blink).map(|g| self.blink_end + g);
                false
            }
            _ => true,
        }
    }
}
