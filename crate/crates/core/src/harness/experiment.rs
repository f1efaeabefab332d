//! Distance and face-angle click-time experiments.
//!
//! Every cell calibrates a fresh simulated user, then runs
//! `trials_per_cell` trials. In each trial the agent starts looking at
//! `start`, picks an icon and clicks it by dwelling. Trial `k` draws from the
//! same random streams in every cell, so cells differ only in the condition
//! under test.

use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calib::{grid_targets, run_calibration, CalibrationConfig, CalibrationModel, CalibrationOutcome};
use crate::dwell::{Layout, TargetRegion};
use crate::geom::{Millis, Point, Rect, ScreenSize};

use super::agent::{Agent, AgentConfig};
use super::eye::{EyeModelConfig, SimulatedUser};
use super::pipeline::{GazePipeline, PipelineConfig};
use super::stats::average_trials;
use super::HarnessError;

/// Human-subject click times the simulated series are compared against:
/// `(distance in inches, three trial times in s, reported average in s)`.
pub const REFERENCE_DISTANCE_TIMES: [(f64, [f64; 3], f64); 3] = [
    (12.0, [1.5, 2.2, 1.07], 1.59),
    (24.0, [2.44, 1.98, 2.1], 2.17),
    (36.0, [3.13, 1.22, 2.28], 2.21),
];

/// `(face angle in degrees, click time in s)`; the pupil was detected and the
/// cursor controllable at every angle.
pub const REFERENCE_ANGLE_TIMES: [(f64, f64); 3] = [(30.0, 2.3), (45.0, 3.8), (90.0, 1.5)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    DistanceSeries,
    AngleSeries,
    Both,
}

/// Icon edge length shrinks in proportion to viewing distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IconScaleModel {
    pub base_size_px: f64,
    pub reference_distance_in: f64,
}

impl Default for IconScaleModel {
    fn default() -> Self {
        Self { base_size_px: 120.0, reference_distance_in: 12.0 }
    }
}

impl IconScaleModel {
    pub fn size_at(&self, distance_in: f64) -> f64 {
        self.base_size_px * self.reference_distance_in / distance_in
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    /// Viewing distances in inches, strictly ascending.
    pub distances: Vec<f64>,
    /// Face angles in degrees; 90° is an untilted face.
    pub tilt_angles: Vec<f64>,
    /// Viewing distance used for the angle series.
    pub angle_distance_in: f64,
    pub trials_per_cell: usize,
    pub icon_scale_model: IconScaleModel,
    /// Icon centres as fractions of the screen size.
    pub icon_positions: Vec<Point>,
    /// Where the agent looks when a trial starts, as a screen fraction.
    pub start: Point,
    pub agent: AgentConfig,
    pub eye: EyeModelConfig,
    /// Fixational tremor while calibration targets are shown.
    pub calibration_tremor_px: f64,
    /// Gaze offsets applied while each calibration target is shown, in
    /// presentation order; used to model a failed calibration.
    pub calibration_offsets: Vec<Point>,
    /// A trial without a click on its icon by this time counts as a miss.
    pub max_trial_ms: Millis,
    /// Per-trial detection rate needed for `pupil_detected`.
    pub min_detection_rate: f64,
    /// Run cells on separate threads. Results do not depend on this flag.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut icon_positions = Vec::new();
        for fy in [0.2, 0.5, 0.8] {
            for fx in [0.2, 0.5, 0.8] {
                if (fx, fy) != (0.5, 0.5) {
                    icon_positions.push(Point::new(fx, fy));
                }
            }
        }
        Self {
            scenario: Scenario::Both,
            seed: 7,
            distances: vec![12.0, 24.0, 36.0],
            tilt_angles: vec![30.0, 45.0, 90.0],
            angle_distance_in: 24.0,
            trials_per_cell: 3,
            icon_scale_model: IconScaleModel::default(),
            icon_positions,
            start: Point::new(0.5, 0.5),
            agent: AgentConfig::default(),
            eye: EyeModelConfig::default(),
            calibration_tremor_px: 1.0,
            calibration_offsets: Vec::new(),
            max_trial_ms: 20_000,
            min_detection_rate: 0.99,
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, screen: ScreenSize) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.distances.is_empty() || self.distances.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return bad("distances must be positive".into());
        }
        if self.distances.windows(2).any(|w| w[1] <= w[0]) {
            return bad("distances must be strictly ascending".into());
        }
        if self.tilt_angles.is_empty() || self.tilt_angles.iter().any(|a| !(0.0..=180.0).contains(a)) {
            return bad("tilt_angles must lie in [0, 180] degrees".into());
        }
        if !(self.angle_distance_in > 0.0) {
            return bad("angle_distance_in must be positive".into());
        }
        if self.trials_per_cell == 0 {
            return Err(HarnessError::InsufficientData("trials_per_cell must be at least 1".into()));
        }
        if !(self.icon_scale_model.base_size_px > 0.0 && self.icon_scale_model.reference_distance_in > 0.0) {
            return bad("icon_scale_model sizes must be positive".into());
        }
        if self.icon_positions.is_empty() {
            return bad("icon_positions must not be empty".into());
        }
        if !(0.0..=1.0).contains(&self.min_detection_rate) {
            return bad("min_detection_rate must lie in [0, 1]".into());
        }
        self.agent.validate().map_err(HarnessError::Config)?;
        self.eye.validate().map_err(HarnessError::Config)?;
        let nearest = self.distances[0].min(self.angle_distance_in);
        self.layout(screen, nearest)?;
        Ok(())
    }

    /// Icons at `distance_in`, ids `icon-1`, `icon-2`, ...
    pub fn layout(&self, screen: ScreenSize, distance_in: f64) -> Result<Layout, HarnessError> {
        let size = self.icon_scale_model.size_at(distance_in);
        let regions = self
            .icon_positions
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let c = Point::new(f.x * screen.w as f64, f.y * screen.h as f64);
                let rect = Rect::new(c.x - size / 2.0, c.y - size / 2.0, size, size);
                if !rect.inside(screen) {
                    return Err(HarnessError::Config(format!("icon {} at {size:.1} px leaves the screen", i + 1)));
                }
                Ok(TargetRegion::new(format!("icon-{}", i + 1), rect))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Layout::new(regions).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Stable seed for random stream `stream`, item `index`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_CALIB_TREMOR: u64 = 1;
const STREAM_CALIB_NOISE: u64 = 2;
const STREAM_ICON: u64 = 3;
const STREAM_LANDING: u64 = 4;
const STREAM_TREMOR: u64 = 5;
const STREAM_BLINK: u64 = 6;
const STREAM_NOISE: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub target_id: String,
    /// Time from trial start to the click on the target, `None` on timeout.
    pub time_s: Option<f64>,
    pub corrections: u32,
    /// Clicks that landed on another icon first.
    pub wrong_clicks: u32,
    /// Fraction of open-eye frames with a detected pupil.
    pub detection_rate: f64,
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub cell: String,
    pub distance_in: f64,
    pub face_angle_deg: Option<f64>,
    pub tilt_deg: f64,
    pub icon_size_px: f64,
    pub calibration_rms_px: f64,
    /// Click times of the trials that clicked their icon, in seconds.
    pub trial_times: Vec<f64>,
    pub average: Option<f64>,
    pub pupil_detected: bool,
    pub cursor_ok: bool,
    /// Lowest per-trial detection rate.
    pub detection_rate: f64,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone)]
struct CellSpec {
    id: String,
    distance_in: f64,
    face_angle_deg: Option<f64>,
    tilt_deg: f64,
}

/// Face angle to image rotation: a face at 90° is upright.
pub fn tilt_for_face_angle(angle_deg: f64) -> f64 {
    90.0 - angle_deg
}

fn calibration_run(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
    eye: &EyeModelConfig,
    distance_in: f64,
) -> Result<CalibrationOutcome, HarnessError> {
    let screen = ccfg.screen_size;
    let mut eye = eye.clone();
    eye.appearance.seed = derive_seed(exp.seed, STREAM_CALIB_NOISE, 0);
    let mut user = SimulatedUser::new(
        eye,
        screen,
        distance_in,
        exp.calibration_tremor_px,
        derive_seed(exp.seed, STREAM_CALIB_TREMOR, 0),
    )
    .with_offsets(exp.calibration_offsets.clone());
    Ok(run_calibration(&mut user, &pcfg.detector, &grid_targets(screen), ccfg)?)
}

fn calibrate(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
    eye: &EyeModelConfig,
    distance_in: f64,
) -> Result<CalibrationModel, HarnessError> {
    let outcome = calibration_run(exp, pcfg, ccfg, eye, distance_in)?;
    if !outcome.model.passed() {
        return Err(HarnessError::CalibrationFailed {
            rms_px: outcome.model.rms_error,
            threshold_px: outcome.model.pass_threshold,
        });
    }
    Ok(outcome.model)
}

/// Runs the calibration procedure for the simulated user without applying
/// the gate, so a failed attempt still yields its report.
pub fn calibration_outcome(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
    distance_in: f64,
    tilt_deg: f64,
) -> Result<CalibrationOutcome, HarnessError> {
    let mut eye = exp.eye.clone();
    eye.appearance.tilt_deg = tilt_deg;
    calibration_run(exp, pcfg, ccfg, &eye, distance_in)
}

/// Calibrates the simulated user for one viewing condition.
pub fn calibrate_user(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
    distance_in: f64,
    tilt_deg: f64,
) -> Result<CalibrationModel, HarnessError> {
    let mut eye = exp.eye.clone();
    eye.appearance.tilt_deg = tilt_deg;
    calibrate(exp, pcfg, ccfg, &eye, distance_in)
}

fn run_cell(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
    cell: &CellSpec,
) -> Result<TrialResult, HarnessError> {
    let screen = ccfg.screen_size;
    let mut eye = exp.eye.clone();
    eye.appearance.tilt_deg = cell.tilt_deg;
    let model = calibrate(exp, pcfg, ccfg, &eye, cell.distance_in)?;
    let calibration_rms_px = model.rms_error;
    let layout = exp.layout(screen, cell.distance_in)?;
    let mut pipeline = GazePipeline::new(model, layout.clone(), pcfg)?;
    let start = Point::new(exp.start.x * screen.w as f64, exp.start.y * screen.h as f64);

    let mut trials = Vec::with_capacity(exp.trials_per_cell);
    for k in 0..exp.trials_per_cell {
        let idx = k as u64;
        let icon = ChaCha8Rng::seed_from_u64(derive_seed(exp.seed, STREAM_ICON, idx)).random_range(0..layout.regions().len());
        let target = &layout.regions()[icon];
        let mut agent = Agent::new(
            exp.agent.clone(),
            start,
            target.rect,
            cell.tilt_deg,
            [
                derive_seed(exp.seed, STREAM_LANDING, idx),
                derive_seed(exp.seed, STREAM_TREMOR, idx),
                derive_seed(exp.seed, STREAM_BLINK, idx),
            ],
        );
        let mut appearance = eye.appearance.clone();
        appearance.seed = derive_seed(exp.seed, STREAM_NOISE, idx);
        pipeline.reset();

        let (mut open, mut detected, mut wrong_clicks) = (0u32, 0u32, 0u32);
        let mut time_s = None;
        'frames: for i in 0.. {
            let t = eye.frame_time(i);
            if t > exp.max_trial_ms {
                break;
            }
            let f = agent.step(t, pipeline.cursor().map(|s| s.pos()));
            let pupil = f.eye_open.then(|| eye.pupil_for(screen, cell.distance_in, f.gaze));
            let out = pipeline.process_frame(&appearance.render(pupil, t))?;
            if f.eye_open {
                open += 1;
                detected += u32::from(out.observation.is_some());
            }
            for c in out.clicks {
                if c.target_id == target.id {
                    time_s = Some(t as f64 / 1000.0);
                    break 'frames;
                }
                wrong_clicks += 1;
            }
        }
        trials.push(TrialRecord {
            trial: k,
            target_id: target.id.clone(),
            time_s,
            corrections: agent.corrections(),
            wrong_clicks,
            detection_rate: if open == 0 { 0.0 } else { detected as f64 / open as f64 },
        });
    }

    let trial_times: Vec<f64> = trials.iter().filter_map(|t| t.time_s).collect();
    let detection_rate = trials.iter().map(|t| t.detection_rate).fold(1.0, f64::min);
    Ok(TrialResult {
        cell: cell.id.clone(),
        distance_in: cell.distance_in,
        face_angle_deg: cell.face_angle_deg,
        tilt_deg: cell.tilt_deg,
        icon_size_px: exp.icon_scale_model.size_at(cell.distance_in),
        calibration_rms_px,
        average: average_trials(&trial_times).ok(),
        pupil_detected: detection_rate >= exp.min_detection_rate,
        cursor_ok: trial_times.len() == trials.len(),
        detection_rate,
        trial_times,
        trials,
    })
}

fn run_cells(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
    cells: &[CellSpec],
) -> Result<Vec<TrialResult>, HarnessError> {
    exp.validate(ccfg.screen_size)?;
    pcfg.validate()?;
    if exp.parallel {
        thread::scope(|s| {
            let handles: Vec<_> = cells.iter().map(|c| s.spawn(move || run_cell(exp, pcfg, ccfg, c))).collect();
            handles.into_iter().map(|h| h.join().expect("experiment cell panicked")).collect()
        })
    } else {
        cells.iter().map(|c| run_cell(exp, pcfg, ccfg, c)).collect()
    }
}

/// One row per viewing distance, icons scaled by the icon model.
pub fn run_distance_series(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
) -> Result<Vec<TrialResult>, HarnessError> {
    let cells: Vec<CellSpec> = exp
        .distances
        .iter()
        .map(|&d| CellSpec { id: format!("{d} in"), distance_in: d, face_angle_deg: None, tilt_deg: 0.0 })
        .collect();
    run_cells(exp, pcfg, ccfg, &cells)
}

/// One row per face angle at `angle_distance_in`.
pub fn run_angle_series(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
) -> Result<Vec<TrialResult>, HarnessError> {
    let cells: Vec<CellSpec> = exp
        .tilt_angles
        .iter()
        .map(|&a| CellSpec {
            id: format!("{a}°"),
            distance_in: exp.angle_distance_in,
            face_angle_deg: Some(a),
            tilt_deg: tilt_for_face_angle(a),
        })
        .collect();
    run_cells(exp, pcfg, ccfg, &cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistanceRow {
    pub distance_in: f64,
    pub trial_times: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAngleRow {
    pub face_angle_deg: f64,
    pub pupil_detected: bool,
    pub cursor_ok: bool,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    pub rows: Vec<TrialResult>,
    pub reference: Vec<ReferenceDistanceRow>,
    /// Row averages never decrease with distance.
    pub non_decreasing: bool,
    pub min_trial_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleTable {
    pub rows: Vec<TrialResult>,
    pub reference: Vec<ReferenceAngleRow>,
    /// Face angle with the lowest average click time.
    pub fastest_angle_deg: Option<f64>,
    pub all_detected: bool,
    pub all_cursor_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub dwell_time_ms: Millis,
    pub distance_series: Option<DistanceTable>,
    pub angle_series: Option<AngleTable>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    /// Pretty JSON with a trailing newline; byte-stable for a fixed input.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

pub fn distance_table(rows: Vec<TrialResult>) -> DistanceTable {
    let avgs: Vec<Option<f64>> = rows.iter().map(|r| r.average).collect();
    let non_decreasing = avgs.iter().all(Option::is_some) && avgs.windows(2).all(|w| w[0] <= w[1]);
    let min_trial_time_s = rows.iter().flat_map(|r| r.trial_times.iter().copied()).reduce(f64::min);
    DistanceTable {
        reference: REFERENCE_DISTANCE_TIMES
            .iter()
            .map(|&(d, t, a)| ReferenceDistanceRow { distance_in: d, trial_times: t.to_vec(), average: a })
            .collect(),
        non_decreasing,
        min_trial_time_s,
        rows,
    }
}

pub fn angle_table(rows: Vec<TrialResult>) -> AngleTable {
    let fastest_angle_deg = rows
        .iter()
        .filter_map(|r| Some((r.face_angle_deg?, r.average?)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(a, _)| a);
    AngleTable {
        reference: REFERENCE_ANGLE_TIMES
            .iter()
            .map(|&(a, t)| ReferenceAngleRow { face_angle_deg: a, pupil_detected: true, cursor_ok: true, time_s: t })
            .collect(),
        fastest_angle_deg,
        all_detected: rows.iter().all(|r| r.pupil_detected),
        all_cursor_ok: rows.iter().all(|r| r.cursor_ok),
        rows,
    }
}

/// Runs the configured series and assembles the report.
pub fn run_experiment(
    exp: &ExperimentConfig,
    pcfg: &PipelineConfig,
    ccfg: &CalibrationConfig,
) -> Result<ExperimentReport, HarnessError> {
    let want = |s: Scenario| exp.scenario == s || exp.scenario == Scenario::Both;
    let distance_series = if want(Scenario::DistanceSeries) {
        Some(distance_table(run_distance_series(exp, pcfg, ccfg)?))
    } else {
        None
    };
    let angle_series = if want(Scenario::AngleSeries) {
        Some(angle_table(run_angle_series(exp, pcfg, ccfg)?))
    } else {
        None
    };
    Ok(ExperimentReport {
        seed: exp.seed,
        dwell_time_ms: pcfg.dwell.dwell_time,
        distance_series,
        angle_series,
        config: exp.clone(),
    })
}
