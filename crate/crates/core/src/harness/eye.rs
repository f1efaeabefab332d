//! Geometry of a head-mounted eye camera and the simulated user seen by it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calib::EyeCamera;
use crate::geom::{Millis, Point, ScreenSize};
use crate::sim::{EyeAppearance, EyeFrame};

/// Maps a point on the screen to the pupil centre in the eye image.
///
/// The eye rotates by `atan(offset / distance)` to look at a point `offset`
/// inches from the screen centre, and the pupil moves `eye_radius_px ·
/// sin(angle)` in the image. Pupil travel therefore shrinks roughly as
/// `1 / distance`, with a mild compressive distortion toward the screen edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EyeModelConfig {
    /// Radius of eye rotation as seen by the camera, in image pixels.
    pub eye_radius_px: f64,
    pub px_per_inch: f64,
    pub frame_rate: f64,
    #[serde(flatten)]
    pub appearance: EyeAppearance,
}

impl Default for EyeModelConfig {
    fn default() -> Self {
        Self {
            eye_radius_px: 150.0,
            px_per_inch: 96.0,
            frame_rate: 30.0,
            appearance: EyeAppearance { noise_sigma: 3.0, ..EyeAppearance::default() },
        }
    }
}

impl EyeModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eye_radius_px > 0.0) || !(self.px_per_inch > 0.0) {
            return Err("eye_radius_px and px_per_inch must be positive".into());
        }
        if !(self.frame_rate > 0.0 && self.frame_rate <= 1000.0) {
            return Err(format!("frame_rate {} outside (0, 1000]", self.frame_rate));
        }
        self.appearance.validate().map_err(|e| e.to_string())
    }

    /// Untilted pupil centre for gaze at `gaze` from `distance_in` inches.
    pub fn pupil_for(&self, screen: ScreenSize, distance_in: f64, gaze: Point) -> Point {
        let c = screen.centre();
        let offset = |px: f64| self.eye_radius_px * ((px / self.px_per_inch) / distance_in).atan().sin();
        let rest = self.appearance.frame_centre();
        Point::new(rest.x + offset(gaze.x - c.x), rest.y + offset(gaze.y - c.y))
    }

    pub fn frame_time(&self, index: u64) -> Millis {
        (index as f64 * 1000.0 / self.frame_rate).floor() as Millis
    }
}

/// A user fixating whatever calibration target is shown, with fixational
/// tremor and optional per-target offsets that model a careless or
/// sabotaged calibration.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    eye: EyeModelConfig,
    screen: ScreenSize,
    distance_in: f64,
    /// Added to the gaze while target `i` (in presentation order) is shown.
    offsets: Vec<Point>,
    tremor: Normal<f64>,
    rng: ChaCha8Rng,
    frame: u64,
    shown: Option<Point>,
    target_index: usize,
}

impl SimulatedUser {
    pub fn new(eye: EyeModelConfig, screen: ScreenSize, distance_in: f64, tremor_px: f64, seed: u64) -> Self {
        Self {
            eye,
            screen,
            distance_in,
            offsets: Vec::new(),
            tremor: Normal::new(0.0, tremor_px.max(0.0)).expect("finite tremor"),
            rng: ChaCha8Rng::seed_from_u64(seed),
            frame: 0,
            shown: None,
            target_index: 0,
        }
    }

    pub fn with_offsets(mut self, offsets: Vec<Point>) -> Self {
        self.offsets = offsets;
        self
    }

    /// Time of the next frame.
    pub fn now(&self) -> Millis {
        self.eye.frame_time(self.frame)
    }
}

impl EyeCamera for SimulatedUser {
    fn capture(&mut self, shown_target: Point) -> Option<EyeFrame> {
        match self.shown {
            Some(prev) if prev != shown_target => self.target_index += 1,
            _ => {}
        }
        self.shown = Some(shown_target);
        let off = self.offsets.get(self.target_index).copied().unwrap_or_default();
        let gaze = Point::new(
            shown_target.x + off.x + self.tremor.sample(&mut self.rng),
            shown_target.y + off.y + self.tremor.sample(&mut self.rng),
        );
        let t = self.now();
        self.frame += 1;
        let pupil = self.eye.pupil_for(self.screen, self.distance_in, gaze);
        Some(self.eye.appearance.render(Some(pupil), t))
    }
}
