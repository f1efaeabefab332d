//! Dwell clicking: sustained gaze on a target region becomes one left click.
//!
//! The clicker is a pure transition function over an explicit state value.
//! All time comes from sample timestamps, so a replay is fully deterministic.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::GazeSample;
use crate::geom::{Millis, Point, Rect};

#[derive(Debug, Error, PartialEq)]
pub enum DwellError {
    #[error("region {0:?} has a non-positive size")]
    EmptyRegion(String),
    #[error("duplicate region id {0:?}")]
    DuplicateId(String),
    #[error("regions {0:?} and {1:?} overlap")]
    Overlap(String, String),
    #[error("invalid dwell config: {0}")]
    Config(String),
}

pub const MIN_DWELL: Millis = 300;
pub const MAX_DWELL: Millis = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DwellConfig {
    pub dwell_time: Millis,
    /// Samples farther than this from the hover anchor restart the dwell.
    pub jitter_radius: f64,
    /// Quiet period after a click while gaze stays on the same target.
    pub refractory: Millis,
}

impl Default for DwellConfig {
    fn default() -> Self {
        Self { dwell_time: 1000, jitter_radius: 50.0, refractory: 500 }
    }
}

impl DwellConfig {
    pub fn validate(&self) -> Result<(), DwellError> {
        if !(MIN_DWELL..=MAX_DWELL).contains(&self.dwell_time) {
            return Err(DwellError::Config(format!(
                "dwell_time {} outside {MIN_DWELL}..={MAX_DWELL} ms",
                self.dwell_time
            )));
        }
        if !(self.jitter_radius >= 0.0) {
            return Err(DwellError::Config("jitter_radius must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRegion {
    pub id: String,
    pub rect: Rect,
}

impl TargetRegion {
    pub fn new(id: impl Into<String>, rect: Rect) -> Self {
        Self { id: id.into(), rect }
    }
}

/// A validated set of non-overlapping regions with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Layout {
    regions: Vec<TargetRegion>,
}

impl Layout {
    pub fn new(regions: Vec<TargetRegion>) -> Result<Self, DwellError> {
        let mut ids = HashSet::new();
        for r in &regions {
            if !(r.rect.w > 0.0 && r.rect.h > 0.0) {
                return Err(DwellError::EmptyRegion(r.id.clone()));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(DwellError::DuplicateId(r.id.clone()));
            }
        }
        for (i, a) in regions.iter().enumerate() {
            if let Some(b) = regions[i + 1..].iter().find(|b| a.rect.overlaps(&b.rect)) {
                return Err(DwellError::Overlap(a.id.clone(), b.id.clone()));
            }
        }
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[TargetRegion] {
        &self.regions
    }

    /// Index of the region containing `p`; at most one exists.
    pub fn hit(&self, p: Point) -> Option<usize> {
        self.regions.iter().position(|r| r.rect.contains(p))
    }
}

impl<'de> Deserialize<'de> for Layout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let regions = Vec::<TargetRegion>::deserialize(d)?;
        Layout::new(regions).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub target_id: String,
    pub at: Millis,
    pub gaze_anchor: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DwellState {
    #[default]
    Idle,
    Hover {
        target: usize,
        since: Millis,
        /// Running sum and count of observed hover samples.
        sum: Point,
        count: u32,
    },
    Refractory {
        target: usize,
        since: Millis,
    },
}

impl DwellState {
    fn hover(target: usize, s: &GazeSample) -> Self {
        DwellState::Hover { target, since: s.timestamp, sum: s.pos(), count: 1 }
    }
}

/// One transition. Samples must arrive in timestamp order.
pub fn step(
    state: DwellState,
    sample: &GazeSample,
    layout: &Layout,
    cfg: &DwellConfig,
) -> (DwellState, Option<ClickEvent>) {
    if !sample.valid {
        return (DwellState::Idle, None);
    }
    let hit = layout.hit(sample.pos());
    let enter = |hit: Option<usize>| match hit {
        Some(r) => DwellState::hover(r, sample),
        None => DwellState::Idle,
    };

    match state {
        DwellState::Idle => (enter(hit), None),
        DwellState::Refractory { target, since } => {
            if hit == Some(target) && sample.timestamp - since < cfg.refractory {
                (state, None)
            } else {
                (enter(hit), None)
            }
        }
        DwellState::Hover { target, since, mut sum, mut count } => {
            if hit != Some(target) {
                return (enter(hit), None);
            }
            if !sample.held {
                let anchor = Point::new(sum.x / count as f64, sum.y / count as f64);
                if sample.pos().distance(anchor) > cfg.jitter_radius {
                    return (DwellState::hover(target, sample), None);
                }
                sum.x += sample.x;
                sum.y += sample.y;
                count += 1;
            }
            if sample.timestamp - since >= cfg.dwell_time {
                let click = ClickEvent {
                    target_id: layout.regions[target].id.clone(),
                    at: sample.timestamp,
                    gaze_anchor: Point::new(sum.x / count as f64, sum.y / count as f64),
                };
                (DwellState::Refractory { target, since: sample.timestamp }, Some(click))
            } else {
                (DwellState::Hover { target, since, sum, count }, None)
            }
        }
    }
}

/// Owns the clicker state for one session.
#[derive(Debug, Clone)]
pub struct DwellClicker {
    layout: Layout,
    cfg: DwellConfig,
    state: DwellState,
}

impl DwellClicker {
    pub fn new(layout: Layout, cfg: DwellConfig) -> Result<Self, DwellError> {
        cfg.validate()?;
        Ok(Self { layout, cfg, state: DwellState::Idle })
    }

    pub fn step(&mut self, sample: &GazeSample) -> Option<ClickEvent> {
        let (next, click) = step(self.state, sample, &self.layout, &self.cfg);
        self.state = next;
        click
    }

    pub fn state(&self) -> DwellState {
        self.state
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &DwellConfig {
        &self.cfg
    }

    /// Fraction of the dwell completed on the hovered target, for progress display.
    pub fn progress(&self, now: Millis) -> Option<(&str, f64)> {
        match self.state {
            DwellState::Hover { target, since, .. } => Some((
                self.layout.regions[target].id.as_str(),
                ((now - since) as f64 / self.cfg.dwell_time as f64).min(1.0),
            )),
            _ => None,
        }
    }

    pub fn reset(&mut self) {
        self.state = DwellState::Idle;
    }
}

/// Runs a whole sample stream through a fresh clicker.
pub fn replay(samples: &[GazeSample], layout: &Layout, cfg: &DwellConfig) -> Vec<ClickEvent> {
    let mut state = DwellState::Idle;
    let mut clicks = Vec::new();
    for s in samples {
        let (next, click) = step(state, s, layout, cfg);
        state = next;
        clicks.extend(click);
    }
    clicks
}
