//! Pupil-to-screen calibration.
//!
//! Each screen axis is fitted as a second-order bivariate polynomial of the
//! pupil position, `1, px, py, px·py, px², py²`, by least squares over the
//! median pupil position recorded at each calibration target. A fit passes
//! when its RMS residual in screen pixels is within the configured gate;
//! gaze mapping is refused until a passing model is installed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Millis, Point, ScreenSize};
use crate::pupil::{detect, DetectorConfig, PupilObservation};
use crate::sim::EyeFrame;

pub const MIN_SAMPLES_PER_POINT: usize = 5;
pub const MIN_POINTS: usize = 6;
pub const TERMS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum CalibError {
    #[error("insufficient calibration data: {0}")]
    InsufficientData(String),
    #[error("calibration targets are degenerate (design matrix is rank deficient)")]
    DegenerateGeometry,
    #[error("a passing calibration is required before gaze can be mapped")]
    CalibrationRequired,
    #[error("calibration aborted: the eye stream ended at target {target} of {total}")]
    Aborted { target: usize, total: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub target: Point,
    pub samples: Vec<PupilObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    Passed,
    Failed,
}

/// Fitted pupil→screen mapping. Coefficients follow the monomial order
/// `1, px, py, px·py, px², py²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub coeffs_x: [f64; TERMS],
    pub coeffs_y: [f64; TERMS],
    pub rms_error: f64,
    pub pass_threshold: f64,
    pub status: CalibrationStatus,
    pub screen_size: ScreenSize,
}

/// One cursor position produced from one camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub timestamp: Millis,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
    /// Position was clamped into the screen.
    #[serde(default)]
    pub out_of_bounds: bool,
    /// Position was carried over a blink rather than observed.
    #[serde(default)]
    pub held: bool,
}

impl GazeSample {
    pub fn valid(timestamp: Millis, x: f64, y: f64) -> Self {
        Self { timestamp, x, y, valid: true, out_of_bounds: false, held: false }
    }

    pub fn invalid(timestamp: Millis) -> Self {
        Self { timestamp, x: 0.0, y: 0.0, valid: false, out_of_bounds: false, held: false }
    }

    pub fn pos(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Valid and actually observed (not a blink placeholder).
    pub fn observed(&self) -> bool {
        self.valid && !self.held
    }
}

fn monomials(p: Point) -> [f64; TERMS] {
    [1.0, p.x, p.y, p.x * p.y, p.x * p.x, p.y * p.y]
}

pub fn eval_poly(c: &[f64; TERMS], p: Point) -> f64 {
    monomials(p).iter().zip(c).map(|(m, c)| m * c).sum()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

impl CalibrationPoint {
    /// Samples that may take part in a fit.
    pub fn usable(&self) -> impl Iterator<Item = &PupilObservation> {
        self.samples.iter().filter(|s| !s.occluded)
    }

    /// Per-axis median of the usable samples.
    pub fn median_pupil(&self) -> Option<Point> {
        let (mut xs, mut ys): (Vec<f64>, Vec<f64>) = self.usable().map(|s| (s.centre.x, s.centre.y)).unzip();
        if xs.is_empty() {
            return None;
        }
        Some(Point::new(median(&mut xs), median(&mut ys)))
    }
}

/// Fits a calibration model; `status` is passed iff `rms_error <= pass_threshold`.
pub fn fit(
    points: &[CalibrationPoint],
    pass_threshold: f64,
    screen_size: ScreenSize,
) -> Result<CalibrationModel, CalibError> {
    let mut pairs = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let n = p.usable().count();
        if n < MIN_SAMPLES_PER_POINT {
            return Err(CalibError::InsufficientData(format!(
                "target {i} has {n} usable samples, need {MIN_SAMPLES_PER_POINT}"
            )));
        }
        pairs.push((p.median_pupil().expect("non-empty"), p.target));
    }
    fit_pairs(&pairs, pass_threshold, screen_size)
}

/// Least-squares fit straight from `(pupil, target)` pairs.
pub fn fit_pairs(
    pairs: &[(Point, Point)],
    pass_threshold: f64,
    screen_size: ScreenSize,
) -> Result<CalibrationModel, CalibError> {
    let mut distinct: Vec<Point> = Vec::new();
    for (_, t) in pairs {
        if !distinct.iter().any(|d| d == t) {
            distinct.push(*t);
        }
    }
    if distinct.len() < MIN_POINTS {
        return Err(CalibError::InsufficientData(format!(
            "{} distinct targets, need {MIN_POINTS}",
            distinct.len()
        )));
    }

    // centre and scale pupil coordinates so the normal matrix stays well conditioned
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (p, _)| (a + p.x / n, b + p.y / n));
    let spread = |f: &dyn Fn(&Point) -> f64, m: f64| {
        let v = pairs.iter().map(|(p, _)| (f(p) - m).powi(2)).sum::<f64>() / n;
        if v.sqrt() > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }
    };
    let ax = spread(&|p| p.x, mx);
    let ay = spread(&|p| p.y, my);
    let norm = |p: Point| Point::new((p.x - mx) * ax, (p.y - my) * ay);

    let design = DMatrix::from_fn(pairs.len(), TERMS, |r, c| monomials(norm(pairs[r].0))[c]);
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin / smax < 1e-9 {
        return Err(CalibError::DegenerateGeometry);
    }
    let solve = |rhs: DVector<f64>| -> [f64; TERMS] {
        let c = svd.solve(&rhs, 0.0).expect("U and V were computed");
        let c: [f64; TERMS] = std::array::from_fn(|i| c[i]);
        denormalize(&c, mx, my, ax, ay)
    };
    let coeffs_x = solve(DVector::from_iterator(pairs.len(), pairs.iter().map(|(_, t)| t.x)));
    let coeffs_y = solve(DVector::from_iterator(pairs.len(), pairs.iter().map(|(_, t)| t.y)));

    let mut model = CalibrationModel {
        coeffs_x,
        coeffs_y,
        rms_error: 0.0,
        pass_threshold,
        status: CalibrationStatus::Failed,
        screen_size,
    };
    model.rms_error = model.rms_over(pairs);
    model.status = if model.rms_error <= pass_threshold {
        CalibrationStatus::Passed
    } else {
        CalibrationStatus::Failed
    };
    Ok(model)
}

/// Rewrites coefficients over `u = ax(px - mx)`, `v = ay(py - my)` as
/// coefficients over raw `px, py`.
fn denormalize(c: &[f64; TERMS], mx: f64, my: f64, ax: f64, ay: f64) -> [f64; TERMS] {
    let (al, be) = (-ax * mx, -ay * my);
    [
        c[0] + c[1] * al + c[2] * be + c[3] * al * be + c[4] * al * al + c[5] * be * be,
        c[1] * ax + c[3] * ax * be + 2.0 * c[4] * ax * al,
        c[2] * ay + c[3] * ay * al + 2.0 * c[5] * ay * be,
        c[3] * ax * ay,
        c[4] * ax * ax,
        c[5] * ay * ay,
    ]
}

impl CalibrationModel {
    pub fn passed(&self) -> bool {
        self.status == CalibrationStatus::Passed
    }

    /// Raw polynomial value, without clamping.
    pub fn evaluate(&self, pupil: Point) -> Point {
        Point::new(eval_poly(&self.coeffs_x, pupil), eval_poly(&self.coeffs_y, pupil))
    }

    pub fn rms_over(&self, pairs: &[(Point, Point)]) -> f64 {
        let ss: f64 = pairs.iter().map(|(p, t)| self.evaluate(*p).distance(*t).powi(2)).sum();
        (ss / pairs.len() as f64).sqrt()
    }

    /// Maps one detector result to a cursor sample.
    ///
    /// A missing pupil, or an occluded one with confidence below
    /// `confidence_floor`, gives an invalid sample at `(0, 0)`.
    pub fn map(
        &self,
        timestamp: Millis,
        obs: Option<&PupilObservation>,
        confidence_floor: f64,
    ) -> Result<GazeSample, CalibError> {
        if !self.passed() {
            return Err(CalibError::CalibrationRequired);
        }
        Ok(match obs {
            Some(o) if !(o.occluded && o.confidence < confidence_floor) => {
                let (p, oob) = self.screen_size.clamp(self.evaluate(o.centre));
                GazeSample { timestamp, x: p.x, y: p.y, valid: true, out_of_bounds: oob, held: false }
            }
            _ => GazeSample::invalid(timestamp),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Holds the active model and enforces the start-up lockout: nothing is
/// mapped until a passing model has been installed.
#[derive(Debug, Clone)]
pub struct GazeMapper {
    model: Option<CalibrationModel>,
    pub confidence_floor: f64,
    last: Option<Point>,
}

impl Default for GazeMapper {
    fn default() -> Self {
        Self::new(0.5)
    }
}

impl GazeMapper {
    pub fn new(confidence_floor: f64) -> Self {
        Self { model: None, confidence_floor, last: None }
    }

    /// Installs `model` if it passed its gate; a failed model is rejected and
    /// the previous one (if any) stays active.
    pub fn install(&mut self, model: CalibrationModel) -> Result<(), CalibError> {
        if !model.passed() {
            return Err(CalibError::CalibrationRequired);
        }
        self.model = Some(model);
        Ok(())
    }

    pub fn model(&self) -> Option<&CalibrationModel> {
        self.model.as_ref()
    }

    /// Like [`CalibrationModel::map`], but invalid samples carry the last
    /// valid cursor position instead of `(0, 0)`.
    pub fn map(&mut self, timestamp: Millis, obs: Option<&PupilObservation>) -> Result<GazeSample, CalibError> {
        let model = self.model.as_ref().ok_or(CalibError::CalibrationRequired)?;
        let mut s = model.map(timestamp, obs, self.confidence_floor)?;
        if s.valid {
            self.last = Some(s.pos());
        } else if let Some(p) = self.last {
            s.x = p.x;
            s.y = p.y;
        }
        Ok(s)
    }
}

/// 3×3 grid at 10%, 50% and 90% of each screen axis, row-major.
pub fn grid_targets(screen: ScreenSize) -> Vec<Point> {
    let fr = [0.1, 0.5, 0.9];
    let mut v = Vec::with_capacity(9);
    for fy in fr {
        for fx in fr {
            v.push(Point::new(screen.w as f64 * fx, screen.h as f64 * fy));
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// RMS gate in screen pixels.
    pub pass_threshold: f64,
    /// Set from the top-level screen size, not read from the section.
    #[serde(skip)]
    pub screen_size: ScreenSize,
    /// Time each target is shown.
    pub dwell_per_target_ms: Millis,
    /// Samples in the first part of each dwell are discarded while the eye settles.
    pub settle_ms: Millis,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            pass_threshold: 30.0,
            screen_size: ScreenSize::default(),
            dwell_per_target_ms: 1000,
            settle_ms: 300,
        }
    }
}

/// Source of eye frames during calibration. The camera is told which target
/// is on screen so that a simulated user can look at it.
pub trait EyeCamera {
    /// Next frame, or `None` when the stream has ended.
    fn capture(&mut self, shown_target: Point) -> Option<EyeFrame>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResidual {
    pub target: Point,
    pub pupil_median: Point,
    pub mapped: Point,
    pub residual: f64,
    pub samples: usize,
}

/// Report written after every calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub targets: Vec<TargetResidual>,
    pub rms_error: f64,
    pub pass_threshold: f64,
    pub status: CalibrationStatus,
}

impl CalibrationReport {
    pub fn new(model: &CalibrationModel, points: &[CalibrationPoint]) -> Self {
        let targets = points
            .iter()
            .filter_map(|p| {
                let m = p.median_pupil()?;
                let mapped = model.evaluate(m);
                Some(TargetResidual {
                    target: p.target,
                    pupil_median: m,
                    mapped,
                    residual: mapped.distance(p.target),
                    samples: p.usable().count(),
                })
            })
            .collect();
        Self {
            targets,
            rms_error: model.rms_error,
            pass_threshold: model.pass_threshold,
            status: model.status,
        }
    }
}

/// Session state: which target is showing and what has been collected.
#[derive(Debug, Clone)]
pub struct CalibrationSession {
    targets: Vec<Point>,
    cfg: CalibrationConfig,
    current: usize,
    shown_since: Option<Millis>,
    points: Vec<CalibrationPoint>,
}

impl CalibrationSession {
    pub fn new(targets: Vec<Point>, cfg: CalibrationConfig) -> Self {
        let points = targets.iter().map(|&t| CalibrationPoint { target: t, samples: Vec::new() }).collect();
        Self { targets, cfg, current: 0, shown_since: None, points }
    }

    /// Target currently on screen, `None` once every target has been shown.
    pub fn current_target(&self) -> Option<Point> {
        self.targets.get(self.current).copied()
    }

    pub fn is_done(&self) -> bool {
        self.current >= self.targets.len()
    }

    pub fn progress(&self) -> (usize, usize) {
        (self.current, self.targets.len())
    }

    /// Feeds the detector result for one frame captured at `t`.
    pub fn feed(&mut self, t: Millis, obs: Option<PupilObservation>) {
        if self.is_done() {
            return;
        }
        let since = *self.shown_since.get_or_insert(t);
        let elapsed = t - since;
        if elapsed >= self.cfg.dwell_per_target_ms {
            self.current += 1;
            self.shown_since = Some(t);
            if self.is_done() {
                return;
            }
            // this frame opens the next target's settling period
            return;
        }
        if elapsed < self.cfg.settle_ms {
            return;
        }
        if let Some(o) = obs.filter(|o| !o.occluded) {
            self.points[self.current].samples.push(o);
        }
    }

    pub fn points(&self) -> &[CalibrationPoint] {
        &self.points
    }

    pub fn finish(&self) -> Result<CalibrationModel, CalibError> {
        fit(&self.points, self.cfg.pass_threshold, self.cfg.screen_size)
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub model: CalibrationModel,
    pub report: CalibrationReport,
}

/// Shows each target in turn, collects pupil samples after the settling
/// period, and fits. A failed gate is returned as a model with
/// `status = Failed`; the caller decides whether to run again.
pub fn run_calibration<C: EyeCamera + ?Sized>(
    camera: &mut C,
    detector: &DetectorConfig,
    targets: &[Point],
    cfg: &CalibrationConfig,
) -> Result<CalibrationOutcome, CalibError> {
    let mut session = CalibrationSession::new(targets.to_vec(), cfg.clone());
    while let Some(target) = session.current_target() {
        let Some(frame) = camera.capture(target) else {
            let (target, total) = session.progress();
            return Err(CalibError::Aborted { target, total });
        };
        session.feed(frame.timestamp(), detect(&frame, detector));
    }
    let model = session.finish()?;
    let report = CalibrationReport::new(&model, session.points());
    if model.passed() {
        log::info!("calibration passed: rms {:.3} px", model.rms_error);
    } else {
        log::warn!(
            "calibration failed: rms {:.3} px exceeds {:.3} px, recalibrate",
            model.rms_error,
            model.pass_threshold
        );
    }
    Ok(CalibrationOutcome { model, report })
}
