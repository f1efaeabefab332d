//! Gaze-stream cleanup and event segmentation.
//!
//! Three stages, each available as a batch function and as a streaming
//! state machine:
//!
//! * [`hold_through_blinks`] replaces short invalid runs with the last valid
//!   position so a blink does not drop the cursor.
//! * [`smooth`] applies a centred per-axis moving median over valid samples.
//! * [`detect_fixations`] segments the stream into fixation, saccade, blink
//!   and signal-lost events using dispersion-threshold identification (I-DT).
//!
//! # Event layout
//!
//! Gaps are maximal runs of samples that are not observed (invalid, or held
//! over a blink). A gap's duration runs from its first sample to the next
//! observed sample, or to its own last sample at the end of the stream. Gaps
//! shorter than `blink_hold` are blinks, the rest signal losses.
//!
//! Signal losses split the stream into segments and I-DT runs on each
//! segment's observed samples. A blink with observed samples on both sides is
//! transparent to I-DT: the fixation or saccade around it carries on and the
//! blink is reported as an event nested inside it.
//!
//! Top-level events (fixations, saccades, signal losses and unbridged blinks)
//! tile the timeline: each starts at its first sample and ends where the next
//! one starts; the last ends 1 ms after the final sample. After a fixation the
//! sample that broke the dispersion bound is always a saccade sample, so two
//! fixations are never adjacent.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::GazeSample;
use crate::geom::{Millis, Point};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("timestamps must strictly increase (sample {index} at {timestamp} ms)")]
    StreamOrder { index: usize, timestamp: Millis },
    #[error("invalid filter config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Moving-median width in valid samples; odd.
    pub smooth_window: usize,
    /// Maximum `(max_x - min_x) + (max_y - min_y)` inside a fixation, in px.
    pub dispersion_threshold: f64,
    pub min_fixation_duration: Millis,
    /// Invalid runs shorter than this are treated as blinks.
    pub blink_hold: Millis,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { smooth_window: 5, dispersion_threshold: 40.0, min_fixation_duration: 150, blink_hold: 300 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.smooth_window == 0 || self.smooth_window % 2 == 0 {
            return Err(FilterError::Config(format!("smooth_window {} must be odd and >= 1", self.smooth_window)));
        }
        if !(self.dispersion_threshold > 0.0) {
            return Err(FilterError::Config("dispersion_threshold must be positive".into()));
        }
        if self.min_fixation_duration == 0 {
            return Err(FilterError::Config("min_fixation_duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Fixation,
    Saccade,
    Blink,
    SignalLost,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Fixation => "fixation",
            EventKind::Saccade => "saccade",
            EventKind::Blink => "blink",
            EventKind::SignalLost => "signal_lost",
        }
    }
}

/// `[start, end)` in ms. `centroid` is set for fixations only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeEvent {
    pub kind: EventKind,
    pub start: Millis,
    pub end: Millis,
    pub centroid: Option<Point>,
}

// ── moving median ───────────────────────────────────────────

/// Streaming centred moving median. A valid sample is released once
/// `smooth_window / 2` later valid samples have arrived (or on flush), with its
/// original timestamp. The window shrinks symmetrically at the stream edges.
/// Invalid samples pass through untouched and in order.
#[derive(Debug, Clone)]
pub struct MedianSmoother {
    half: usize,
    pending: VecDeque<(GazeSample, Option<usize>)>,
    /// Valid positions; `positions[k]` has valid index `base + k`.
    positions: VecDeque<Point>,
    base: usize,
    seen: usize,
}

impl MedianSmoother {
    pub fn new(window: usize) -> Self {
        Self { half: window / 2, pending: VecDeque::new(), positions: VecDeque::new(), base: 0, seen: 0 }
    }

    pub fn push(&mut self, s: GazeSample) -> Vec<GazeSample> {
        let idx = s.valid.then(|| {
            self.positions.push_back(s.pos());
            self.seen += 1;
            self.seen - 1
        });
        self.pending.push_back((s, idx));
        self.drain(false)
    }

    pub fn flush(&mut self) -> Vec<GazeSample> {
        let out = self.drain(true);
        self.pending.clear();
        out
    }

    fn drain(&mut self, at_end: bool) -> Vec<GazeSample> {
        let mut out = Vec::new();
        while let Some(&(s, idx)) = self.pending.front() {
            let Some(i) = idx else {
                out.push(s);
                self.pending.pop_front();
                continue;
            };
            let ahead = self.seen - 1 - i;
            let r = if at_end { self.half.min(i).min(ahead) } else { self.half.min(i) };
            if ahead < r {
                break;
            }
            let lo = i - r - self.base;
            let win = self.positions.range(lo..=lo + 2 * r);
            let (mut xs, mut ys): (Vec<f64>, Vec<f64>) = win.map(|p| (p.x, p.y)).unzip();
            let mid = r;
            xs.select_nth_unstable_by(mid, f64::total_cmp);
            ys.select_nth_unstable_by(mid, f64::total_cmp);
            out.push(GazeSample { x: xs[mid], y: ys[mid], ..s });
            self.pending.pop_front();
            // keep `half` positions behind the next sample to be released
            while self.base + self.half < i + 1 && !self.positions.is_empty() {
                self.positions.pop_front();
                self.base += 1;
            }
        }
        out
    }
}

/// Batch form of [`MedianSmoother`]: same length and timestamps as the input.
pub fn smooth(samples: &[GazeSample], cfg: &FilterConfig) -> Vec<GazeSample> {
    let mut m = MedianSmoother::new(cfg.smooth_window);
    let mut out: Vec<_> = samples.iter().flat_map(|&s| m.push(s)).collect();
    out.extend(m.flush());
    out
}

// ── blink hold ──────────────────────────────────────────────

/// Streaming blink hold. Invalid samples are buffered until the run either
/// ends (a valid sample arrives) or outlasts `blink_hold`.
#[derive(Debug, Clone)]
pub struct BlinkHolder {
    blink_hold: Millis,
    last_valid: Option<GazeSample>,
    gap: Vec<GazeSample>,
    /// The current invalid run already exceeded `blink_hold`.
    lost: bool,
}

impl BlinkHolder {
    pub fn new(blink_hold: Millis) -> Self {
        Self { blink_hold, last_valid: None, gap: Vec::new(), lost: false }
    }

    pub fn push(&mut self, s: GazeSample) -> Vec<GazeSample> {
        if s.valid {
            let mut out = self.close_gap(Some(s.timestamp));
            self.lost = false;
            self.last_valid = Some(s);
            out.push(s);
            return out;
        }
        if self.lost {
            return vec![s];
        }
        self.gap.push(s);
        if s.timestamp - self.gap[0].timestamp >= self.blink_hold {
            self.lost = true;
            return std::mem::take(&mut self.gap);
        }
        Vec::new()
    }

    pub fn flush(&mut self) -> Vec<GazeSample> {
        self.close_gap(None)
    }

    fn close_gap(&mut self, next_valid: Option<Millis>) -> Vec<GazeSample> {
        let gap = std::mem::take(&mut self.gap);
        let (Some(first), Some(last)) = (gap.first(), gap.last()) else {
            return gap;
        };
        let until = next_valid.unwrap_or(last.timestamp);
        match self.last_valid {
            Some(v) if until - first.timestamp < self.blink_hold => gap
                .iter()
                .map(|g| GazeSample { timestamp: g.timestamp, held: true, out_of_bounds: false, ..v })
                .collect(),
            _ => gap,
        }
    }
}

pub fn hold_through_blinks(samples: &[GazeSample], cfg: &FilterConfig) -> Vec<GazeSample> {
    let mut h = BlinkHolder::new(cfg.blink_hold);
    let mut out: Vec<_> = samples.iter().flat_map(|&s| h.push(s)).collect();
    out.extend(h.flush());
    out
}

// ── fixation detection ──────────────────────────────────────

fn check_order(samples: &[GazeSample]) -> Result<(), FilterError> {
    for (i, w) in samples.windows(2).enumerate() {
        if w[1].timestamp <= w[0].timestamp {
            return Err(FilterError::StreamOrder { index: i + 1, timestamp: w[1].timestamp });
        }
    }
    Ok(())
}

/// Batch event segmentation; see the module docs for the event layout.
pub fn detect_fixations(samples: &[GazeSample], cfg: &FilterConfig) -> Result<Vec<GazeEvent>, FilterError> {
    check_order(samples)?;
    Ok(segment_events(samples, cfg, None))
}

/// A run of segment samples, as an inclusive range into the segment's
/// observed-index list.
#[derive(Debug, Clone, Copy)]
struct Run {
    kind: EventKind,
    first: usize,
    last: usize,
}

/// `tail` is the timestamp of the (observed) sample that follows `samples`
/// in a longer stream, if any.
fn segment_events(samples: &[GazeSample], cfg: &FilterConfig, tail: Option<Millis>) -> Vec<GazeEvent> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let t = |i: usize| samples[i].timestamp;
    let stream_end = tail.unwrap_or(t(n - 1) + 1);

    // top-level events with `end` still unset, plus nested blinks
    let mut top: Vec<GazeEvent> = Vec::new();
    let mut nested = Vec::new();
    let mut segment: Vec<usize> = Vec::new();

    let flush_segment = |segment: &mut Vec<usize>, top: &mut Vec<GazeEvent>| {
        for Run { kind, first, last } in idt(samples, segment, cfg) {
            let centroid = (kind == EventKind::Fixation).then(|| {
                let m = (last - first + 1) as f64;
                let (sx, sy) = segment[first..=last]
                    .iter()
                    .fold((0.0, 0.0), |(x, y), &j| (x + samples[j].x, y + samples[j].y));
                Point::new(sx / m, sy / m)
            });
            top.push(GazeEvent { kind, start: t(segment[first]), end: 0, centroid });
        }
        segment.clear();
    };

    let mut i = 0;
    while i < n {
        if samples[i].observed() {
            segment.push(i);
            i += 1;
            continue;
        }
        let a = i;
        while i < n && !samples[i].observed() {
            i += 1;
        }
        let b = i - 1;
        let next = if i < n { Some(t(i)) } else { tail };
        let dur = next.unwrap_or(t(b)) - t(a);
        let kind = if dur < cfg.blink_hold { EventKind::Blink } else { EventKind::SignalLost };
        let bridged = kind == EventKind::Blink && !segment.is_empty() && i < n;
        if bridged {
            nested.push(GazeEvent { kind, start: t(a), end: t(i), centroid: None });
        } else {
            flush_segment(&mut segment, &mut top);
            top.push(GazeEvent { kind, start: t(a), end: 0, centroid: None });
        }
    }
    flush_segment(&mut segment, &mut top);

    for k in 0..top.len() {
        top[k].end = top.get(k + 1).map_or(stream_end, |next| next.start);
    }
    top.extend(nested);
    top.sort_by_key(|e| e.start);
    top
}

/// Running bounding box for the dispersion measure.
#[derive(Clone, Copy)]
struct Spread {
    min: Point,
    max: Point,
}

impl Spread {
    fn new(p: Point) -> Self {
        Self { min: p, max: p }
    }

    fn add(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    fn dispersion(&self) -> f64 {
        (self.max.x - self.min.x) + (self.max.y - self.min.y)
    }
}

/// I-DT over one segment. Returns fixation and saccade runs as inclusive
/// ranges into `seg`, in order and covering it.
fn idt(samples: &[GazeSample], seg: &[usize], cfg: &FilterConfig) -> Vec<Run> {
    let m = seg.len();
    let t = |k: usize| samples[seg[k]].timestamp;
    let pos = |k: usize| samples[seg[k]].pos();
    let mut runs = Vec::new();
    let mut saccade_from: Option<usize> = None;
    let close_saccade = |from: &mut Option<usize>, upto: usize, runs: &mut Vec<Run>| {
        if let Some(f) = from.take() {
            runs.push(Run { kind: EventKind::Saccade, first: f, last: upto });
        }
    };

    let mut i = 0;
    while i < m {
        // smallest window starting at i that spans the minimum duration
        let Some(j0) = (i + 1..m).find(|&j| t(j) - t(i) >= cfg.min_fixation_duration) else {
            saccade_from.get_or_insert(i);
            break;
        };
        let mut spread = Spread::new(pos(i));
        for k in i + 1..=j0 {
            spread.add(pos(k));
        }
        if spread.dispersion() > cfg.dispersion_threshold {
            saccade_from.get_or_insert(i);
            i += 1;
            continue;
        }
        let mut j = j0;
        while j + 1 < m {
            let mut grown = spread;
            grown.add(pos(j + 1));
            if grown.dispersion() > cfg.dispersion_threshold {
                break;
            }
            spread = grown;
            j += 1;
        }
        if i > 0 {
            close_saccade(&mut saccade_from, i - 1, &mut runs);
        }
        runs.push(Run { kind: EventKind::Fixation, first: i, last: j });
        if j + 1 < m {
            // the sample that broke the bound opens the next saccade
            saccade_from = Some(j + 1);
            i = j + 2;
        } else {
            i = j + 1;
        }
    }
    if m > 0 {
        close_saccade(&mut saccade_from, m - 1, &mut runs);
    }
    runs
}

/// Streaming wrapper around [`detect_fixations`]. Events are released when a
/// signal loss ends (everything before it is then final) and on flush; the
/// concatenated output equals the batch result.
#[derive(Debug, Clone)]
pub struct FixationDetector {
    cfg: FilterConfig,
    buf: Vec<GazeSample>,
}

impl FixationDetector {
    pub fn new(cfg: FilterConfig) -> Self {
        Self { cfg, buf: Vec::new() }
    }

    pub fn push(&mut self, s: GazeSample) -> Result<Vec<GazeEvent>, FilterError> {
        if let Some(last) = self.buf.last() {
            if s.timestamp <= last.timestamp {
                return Err(FilterError::StreamOrder { index: self.buf.len(), timestamp: s.timestamp });
            }
        }
        let mut out = Vec::new();
        if s.observed() {
            let gap_start = self.buf.iter().rposition(|b| b.observed()).map_or(0, |p| p + 1);
            if gap_start < self.buf.len() && s.timestamp - self.buf[gap_start].timestamp >= self.cfg.blink_hold {
                out = segment_events(&self.buf, &self.cfg, Some(s.timestamp));
                self.buf.clear();
            }
        }
        self.buf.push(s);
        Ok(out)
    }

    pub fn flush(&mut self) -> Vec<GazeEvent> {
        let out = segment_events(&self.buf, &self.cfg, None);
        self.buf.clear();
        out
    }
}
