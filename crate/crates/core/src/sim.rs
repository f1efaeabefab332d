//! Deterministic synthetic eye camera.
//!
//! Frames are a sclera-coloured background with a dark pupil disk. The disk
//! can be cut from the top by an eyelid, hidden entirely during blinks, rotated
//! with the head and perturbed by seeded Gaussian noise. Every frame comes with
//! the true pupil centre so downstream stages can be checked against it.

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Millis, Point};

pub const MIN_WIDTH: u32 = 32;
pub const MIN_HEIGHT: u32 = 24;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time {t} ms is outside the scenario duration of {duration} ms")]
    TimeOutOfRange { t: Millis, duration: Millis },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One grayscale eye image.
#[derive(Clone, PartialEq, Eq)]
pub struct EyeFrame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    timestamp: Millis,
}

impl std::fmt::Debug for EyeFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EyeFrame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("timestamp", &self.timestamp)
            .finish_non_exhaustive()
    }
}

impl EyeFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, timestamp: Millis) -> Result<Self, SimError> {
        if width < MIN_WIDTH || height < MIN_HEIGHT {
            return Err(SimError::InvalidFrame(format!(
                "{width}x{height} is smaller than {MIN_WIDTH}x{MIN_HEIGHT}"
            )));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(SimError::InvalidFrame(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels, timestamp })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn timestamp(&self) -> Millis {
        self.timestamp
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    /// Binary PGM (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height, &self.pixels)
    }

    pub fn from_pgm(bytes: &[u8], timestamp: Millis) -> Result<Self, SimError> {
        let (width, height, pixels) = decode_pgm(bytes)?;
        Self::new(width, height, pixels, timestamp)
    }

    /// Writes `frame_<timestamp>.pgm` into `dir` and returns the path.
    pub fn write_pgm(&self, dir: &Path) -> Result<PathBuf, SimError> {
        let path = dir.join(format!("frame_{}.pgm", self.timestamp));
        let mut f = fs::File::create(&path)?;
        f.write_all(&self.to_pgm())?;
        Ok(path)
    }
}

pub fn encode_pgm(width: u32, height: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

fn decode_pgm(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), SimError> {
    let bad = |m: &str| SimError::InvalidFrame(format!("pgm: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a P5 file"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad("bad number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let n = w as usize * h as usize;
    if data.len() < n {
        return Err(bad("truncated raster"));
    }
    Ok((w, h, data[..n].to_vec()))
}

/// Optical parameters shared by every frame of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EyeAppearance {
    pub width: u32,
    pub height: u32,
    /// Pupil radius in pixels.
    pub pupil_radius: f64,
    pub sclera_level: u8,
    pub pupil_level: u8,
    /// Standard deviation of additive Gaussian noise, in gray levels.
    pub noise_sigma: f64,
    /// Fraction of the pupil disk's height hidden from the top by the eyelid.
    pub eyelid_coverage: f64,
    /// Head tilt, applied as a rotation of the whole image about its centre.
    pub tilt_deg: f64,
    /// Global illumination change added to every pixel before noise.
    pub brightness_offset: f64,
    pub seed: u64,
}

impl Default for EyeAppearance {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            pupil_radius: 12.0,
            sclera_level: 200,
            pupil_level: 30,
            noise_sigma: 0.0,
            eyelid_coverage: 0.0,
            tilt_deg: 0.0,
            brightness_offset: 0.0,
            seed: 0,
        }
    }
}

impl EyeAppearance {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.width < MIN_WIDTH || self.height < MIN_HEIGHT {
            return bad(format!("frame {}x{} below {MIN_WIDTH}x{MIN_HEIGHT}", self.width, self.height));
        }
        if self.pupil_level >= self.sclera_level {
            return bad("pupil_level must be darker than sclera_level".into());
        }
        if !(0.0..1.0).contains(&self.eyelid_coverage) {
            return bad(format!("eyelid_coverage {} outside [0, 1)", self.eyelid_coverage));
        }
        if !(self.pupil_radius > 0.0) {
            return bad("pupil_radius must be positive".into());
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be a finite non-negative number".into());
        }
        if !self.tilt_deg.is_finite() || !self.brightness_offset.is_finite() {
            return bad("tilt_deg and brightness_offset must be finite".into());
        }
        Ok(())
    }

    /// Centre of rotation for head tilt, in pixel-centre coordinates.
    pub fn frame_centre(&self) -> Point {
        Point::new((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    /// Where an untilted pupil centre lands once the head tilt is applied.
    pub fn tilted(&self, p: Point) -> Point {
        if self.tilt_deg == 0.0 {
            p
        } else {
            p.rotate_about(self.frame_centre(), self.tilt_deg)
        }
    }

    /// Renders one frame. `pupil` is the untilted centre, `None` for a closed
    /// eye. Pixel `(x, y)` samples the scene at its centre `(x, y)`.
    pub fn render(&self, pupil: Option<Point>, t: Millis) -> EyeFrame {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut level = vec![self.sclera_level as f64; w * h];

        if let Some(p) = pupil {
            let centre = self.frame_centre();
            let c = self.tilted(p);
            let r = self.pupil_radius;
            let r2 = r * r;
            let lid_y = p.y - r + 2.0 * r * self.eyelid_coverage;
            let x0 = ((c.x - r - 1.0).floor().max(0.0)) as usize;
            let y0 = ((c.y - r - 1.0).floor().max(0.0)) as usize;
            let x1 = ((c.x + r + 1.0).ceil().max(0.0) as usize).min(w.saturating_sub(1));
            let y1 = ((c.y + r + 1.0).ceil().max(0.0) as usize).min(h.saturating_sub(1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let px = Point::new(x as f64, y as f64);
                    if (px.x - c.x).powi(2) + (px.y - c.y).powi(2) > r2 {
                        continue;
                    }
                    // undo the tilt to decide eyelid coverage in the eye's own frame
                    let local = if self.tilt_deg == 0.0 {
                        px
                    } else {
                        px.rotate_about(centre, -self.tilt_deg)
                    };
                    if local.y >= lid_y {
                        level[y * w + x] = self.pupil_level as f64;
                    }
                }
            }
        }

        let noise = (self.noise_sigma > 0.0).then(|| {
            let rng = ChaCha8Rng::seed_from_u64(frame_seed(self.seed, t));
            (rng, Normal::new(0.0, self.noise_sigma).expect("finite sigma"))
        });
        let pixels = match noise {
            None => level
                .iter()
                .map(|v| quantize(v + self.brightness_offset))
                .collect(),
            Some((mut rng, normal)) => level
                .iter()
                .map(|v| quantize(v + self.brightness_offset + normal.sample(&mut rng)))
                .collect(),
        };
        EyeFrame { width: self.width, height: self.height, pixels, timestamp: t }
    }
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn frame_seed(seed: u64, t: Millis) -> u64 {
    seed ^ t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One point of a piecewise-linear pupil trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: Millis,
    pub x: f64,
    pub y: f64,
}

/// Ground-truth pupil-centre trajectory (untilted frame pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PupilPath {
    Fixed { x: f64, y: f64 },
    /// Constant-speed motion from `from` at t=0 to `to` at the end of the scenario.
    Linear { from: Point, to: Point },
    /// Piecewise-linear through time-sorted waypoints, held constant outside them.
    Waypoints { points: Vec<Waypoint> },
}

impl PupilPath {
    pub fn at(&self, t: Millis, duration: Millis) -> Point {
        match self {
            PupilPath::Fixed { x, y } => Point::new(*x, *y),
            PupilPath::Linear { from, to } => {
                let a = if duration == 0 { 0.0 } else { t as f64 / duration as f64 };
                Point::new(from.x + (to.x - from.x) * a, from.y + (to.y - from.y) * a)
            }
            PupilPath::Waypoints { points } => {
                let first = points[0];
                if t <= first.t {
                    return Point::new(first.x, first.y);
                }
                for pair in points.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    if t <= b.t {
                        let f = (t - a.t) as f64 / (b.t - a.t) as f64;
                        return Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f);
                    }
                }
                let last = points[points.len() - 1];
                Point::new(last.x, last.y)
            }
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if let PupilPath::Waypoints { points } = self {
            if points.is_empty() {
                return Err(SimError::InvalidScenario("waypoint path is empty".into()));
            }
            if points.windows(2).any(|p| p[1].t <= p[0].t) {
                return Err(SimError::InvalidScenario("waypoint times must increase".into()));
            }
        }
        Ok(())
    }
}

/// A scripted recording session. Serialized as a flat JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    pub duration_ms: Millis,
    pub pupil_path: PupilPath,
    /// Closed-eye intervals `[start_ms, end_ms]`, inclusive.
    #[serde(default)]
    pub blink_intervals: Vec<(Millis, Millis)>,
    #[serde(flatten)]
    pub appearance: EyeAppearance,
}

fn default_frame_rate() -> f64 {
    30.0
}

/// Per-frame oracle: the true pupil centre after tilt, or `None` while blinking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub timestamp: Millis,
    pub centre: Option<Point>,
}

impl GroundTruth {
    pub fn is_blink(&self) -> bool {
        self.centre.is_none()
    }
}

impl SimScenario {
    pub fn new(duration_ms: Millis, pupil_path: PupilPath) -> Self {
        Self {
            frame_rate: default_frame_rate(),
            duration_ms,
            pupil_path,
            blink_intervals: Vec::new(),
            appearance: EyeAppearance::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: SimScenario =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.appearance.validate()?;
        self.pupil_path.validate()?;
        if !(self.frame_rate > 0.0 && self.frame_rate <= 1000.0) {
            return Err(SimError::InvalidScenario(format!(
                "frame_rate {} outside (0, 1000]",
                self.frame_rate
            )));
        }
        let mut blinks = self.blink_intervals.clone();
        blinks.sort_unstable();
        for &(s, e) in &blinks {
            if s > e || e > self.duration_ms {
                return Err(SimError::InvalidScenario(format!(
                    "blink ({s}, {e}) is empty or outside the duration"
                )));
            }
        }
        if blinks.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(SimError::InvalidScenario("blink intervals overlap".into()));
        }
        Ok(())
    }

    pub fn is_blinking(&self, t: Millis) -> bool {
        self.blink_intervals.iter().any(|&(s, e)| s <= t && t <= e)
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_ms as f64 * self.frame_rate / 1000.0 + 1e-9).floor() as usize + 1
    }

    pub fn frame_time(&self, index: usize) -> Millis {
        (index as f64 * 1000.0 / self.frame_rate + 1e-9).floor() as Millis
    }

    pub fn render_frame(&self, t: Millis) -> Result<(EyeFrame, GroundTruth), SimError> {
        if t > self.duration_ms {
            return Err(SimError::TimeOutOfRange { t, duration: self.duration_ms });
        }
        let pupil = (!self.is_blinking(t)).then(|| self.pupil_path.at(t, self.duration_ms));
        let frame = self.appearance.render(pupil, t);
        let centre = pupil.map(|p| self.appearance.tilted(p));
        Ok((frame, GroundTruth { timestamp: t, centre }))
    }

    pub fn play(&self) -> Result<ScenarioPlayer<'_>, SimError> {
        self.validate()?;
        Ok(ScenarioPlayer { scenario: self, next: 0, count: self.frame_count() })
    }
}

/// Renders one frame of `scenario` at time `t`.
pub fn render_frame(scenario: &SimScenario, t: Millis) -> Result<(EyeFrame, GroundTruth), SimError> {
    scenario.render_frame(t)
}

/// Uniformly timed frames over the whole scenario.
pub fn play_scenario(scenario: &SimScenario) -> Result<ScenarioPlayer<'_>, SimError> {
    scenario.play()
}

pub struct ScenarioPlayer<'a> {
    scenario: &'a SimScenario,
    next: usize,
    count: usize,
}

impl Iterator for ScenarioPlayer<'_> {
    type Item = (EyeFrame, GroundTruth);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let t = self.scenario.frame_time(self.next);
        self.next += 1;
        Some(self.scenario.render_frame(t).expect("frame times lie inside the duration"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.count - self.next;
        (n, Some(n))
    }
}

impl ExactSizeIterator for ScenarioPlayer<'_> {}

/// Plays `scenario` on a background thread, delivering frames in timestamp
/// order through a bounded queue of `capacity` frames.
pub fn spawn_player(
    scenario: SimScenario,
    capacity: usize,
) -> Result<mpsc::Receiver<(EyeFrame, GroundTruth)>, SimError> {
    scenario.validate()?;
    let (tx, rx) = mpsc::sync_channel(capacity);
    thread::spawn(move || {
        for item in scenario.play().expect("validated") {
            if tx.send(item).is_err() {
                break;
            }
        }
    });
    Ok(rx)
}
