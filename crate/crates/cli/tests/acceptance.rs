//! Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
//! Exits non-zero when any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use eyeguide_core::calib::{fit, fit_pairs, grid_targets, CalibError, CalibrationPoint, CalibrationStatus, GazeMapper};
use eyeguide_core::config::Config;
use eyeguide_core::harness::experiment::REFERENCE_DISTANCE_TIMES;
use eyeguide_core::harness::{average_trials, run_experiment, ExperimentConfig, ExperimentReport, Scenario};
use eyeguide_core::pupil::{detect, DetectorConfig, PupilObservation};
use eyeguide_core::sim::EyeAppearance;
use eyeguide_core::{Point, ScreenSize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 7;
const SERIES_BUDGET: Duration = Duration::from_secs(30);
const FIXATION_BUDGET: Duration = Duration::from_secs(60);
const DETECTOR_FRAMES: usize = 1000;
const DETECTOR_MAX_ERROR_PX: f64 = 1.0;
const DETECTOR_MIN_HIT_RATE: f64 = 0.99;
const MAX_NOISE_SIGMA: f64 = 5.0;
const MIN_DETECTION_RATE: f64 = 0.99;
const IDENTITY_RMS: f64 = 1e-9;
const AFFINE_RMS: f64 = 1e-6;
const QUADRATIC_GATE_PX: f64 = 2.0;
const QUADRATIC_MAX_RMS: f64 = 1.0;
/// Pupil samples per target in the noisy fixture; about 50 are needed for the
/// median to hold rms <= 1 px at 0.3 px pupil noise and ~15 screen px per pupil px.
const QUADRATIC_SAMPLES: usize = 60;
const ORACLE_CASES: usize = 10_000;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg.chars().take(400).collect())
        }
    };
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
        Err(why) => println!("FAIL  {name}: {why} [{secs:.1} s]"),
    }
    result.is_ok()
}

fn series(scenario: Scenario) -> (ExperimentReport, Duration) {
    let cfg = Config::default();
    let exp = ExperimentConfig { seed: SEED, scenario, ..cfg.experiment.clone() };
    let start = Instant::now();
    let report = run_experiment(&exp, &cfg.pipeline(), &cfg.calibration).expect("experiment runs");
    (report, start.elapsed())
}

fn distance_averages() -> Outcome {
    let mut got = Vec::new();
    for (distance, times, reference) in REFERENCE_DISTANCE_TIMES {
        let avg = average_trials(&times).map_err(|e| e.to_string())?;
        ensure(avg == reference, || format!("{distance} in: {avg} != reference {reference}"))?;
        got.push(format!("{avg:.2}"));
    }
    Ok(format!("averages {} match the reference exactly", got.join(", ")))
}

fn distance_trend() -> Outcome {
    let (report, took) = series(Scenario::DistanceSeries);
    let d = report.distance_series.as_ref().ok_or("no distance series")?;
    let avgs: Vec<f64> = d.rows.iter().map(|r| r.average.unwrap_or(f64::NAN)).collect();
    ensure(d.non_decreasing && avgs.windows(2).all(|w| w[0] <= w[1]), || format!("averages {avgs:?} decrease"))?;
    let dwell_s = report.dwell_time_ms as f64 / 1000.0;
    for row in &d.rows {
        for t in &row.trials {
            let time = t.time_s.ok_or_else(|| format!("{} trial {} timed out", row.cell, t.trial))?;
            ensure(time >= dwell_s, || format!("{} trial {} took {time} s < dwell", row.cell, t.trial))?;
        }
    }
    ensure(took < SERIES_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("seed {SEED} averages {avgs:?} s non-decreasing, every trial >= {dwell_s} s"))
}

fn angle_robustness() -> Outcome {
    let (report, took) = series(Scenario::AngleSeries);
    let noise = report.config.eye.appearance.noise_sigma;
    ensure(noise <= MAX_NOISE_SIGMA, || format!("noise_sigma {noise} above {MAX_NOISE_SIGMA}"))?;
    let a = report.angle_series.as_ref().ok_or("no angle series")?;
    let mut cells = Vec::new();
    for row in &a.rows {
        ensure(row.pupil_detected && row.cursor_ok, || format!("{} detected={} cursor_ok={}", row.cell, row.pupil_detected, row.cursor_ok))?;
        ensure(row.detection_rate >= MIN_DETECTION_RATE, || format!("{} detection rate {}", row.cell, row.detection_rate))?;
        cells.push(format!("{}°:{:.3}", row.face_angle_deg.unwrap_or(f64::NAN), row.detection_rate));
    }
    ensure(took < SERIES_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("all cells Y/Y, detection rates {}", cells.join(" ")))
}

fn random_centre(rng: &mut ChaCha8Rng, a: &EyeAppearance) -> Point {
    let m = a.pupil_radius + 20.0;
    Point::new(rng.random_range(m..a.width as f64 - m), rng.random_range(m..a.height as f64 - m))
}

fn detector_accuracy() -> Outcome {
    let det = DetectorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC);
    let mut within = 0;
    for i in 0..DETECTOR_FRAMES {
        let a = EyeAppearance {
            noise_sigma: rng.random_range(0.0..=MAX_NOISE_SIGMA),
            pupil_radius: rng.random_range(8.0..16.0),
            seed: rng.random(),
            ..EyeAppearance::default()
        };
        let c = random_centre(&mut rng, &a);
        if detect(&a.render(Some(c), i as u64), &det).is_some_and(|o| o.centre.distance(c) <= DETECTOR_MAX_ERROR_PX) {
            within += 1;
        }
    }
    let rate = within as f64 / DETECTOR_FRAMES as f64;
    ensure(rate >= DETECTOR_MIN_HIT_RATE, || format!("only {within}/{DETECTOR_FRAMES} within {DETECTOR_MAX_ERROR_PX} px"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x11D);
    for i in 0..DETECTOR_FRAMES {
        let a = EyeAppearance {
            noise_sigma: 0.0,
            eyelid_coverage: rng.random_range(0.1..=0.5),
            pupil_radius: rng.random_range(8.0..16.0),
            ..EyeAppearance::default()
        };
        let c = random_centre(&mut rng, &a);
        let o = detect(&a.render(Some(c), i as u64), &det).ok_or_else(|| format!("lost pupil at coverage {}", a.eyelid_coverage))?;
        let (ex, ey) = ((o.centre.x - c.x).abs(), (o.centre.y - c.y).abs());
        ensure(ex <= ey, || format!("coverage {:.2}: x error {ex} > y error {ey}", a.eyelid_coverage))?;
    }
    Ok(format!("{within}/{DETECTOR_FRAMES} within {DETECTOR_MAX_ERROR_PX} px; eyelid x error <= y error in all {DETECTOR_FRAMES}"))
}

fn calibration() -> Outcome {
    let screen = ScreenSize::new(1024, 768);
    let grid: Vec<Point> = (0..9).map(|k| Point::new(130.0 + 30.0 * (k % 3) as f64, 100.0 + 20.0 * (k / 3) as f64)).collect();
    let quadratic = |p: Point| {
        let (u, v) = (p.x - 160.0, p.y - 120.0);
        Point::new(512.0 + 14.0 * u + 0.02 * u * u - 0.01 * u * v, 384.0 + 15.0 * v + 0.03 * v * v + 0.005 * u * v)
    };
    let affine = |p: Point| Point::new(3.0 * p.x - 0.5 * p.y + 40.0, 0.25 * p.x + 2.5 * p.y - 17.0);

    let identity: Vec<(Point, Point)> = grid_targets(screen).into_iter().map(|t| (t, t)).collect();
    let id_rms = fit_pairs(&identity, QUADRATIC_GATE_PX, screen).map_err(|e| e.to_string())?.rms_error;
    ensure(id_rms < IDENTITY_RMS, || format!("identity rms {id_rms}"))?;

    let pairs: Vec<(Point, Point)> = grid.iter().map(|&p| (p, affine(p))).collect();
    let aff_rms = fit_pairs(&pairs, QUADRATIC_GATE_PX, screen).map_err(|e| e.to_string())?.rms_error;
    ensure(aff_rms < AFFINE_RMS, || format!("affine rms {aff_rms}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let points: Vec<CalibrationPoint> = grid
        .iter()
        .map(|&p| CalibrationPoint {
            target: quadratic(p),
            samples: (0..QUADRATIC_SAMPLES)
                .map(|_| PupilObservation {
                    centre: Point::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng)),
                    radius_estimate: 12.0,
                    confidence: 1.0,
                    occluded: false,
                    timestamp: 0,
                })
                .collect(),
        })
        .collect();
    let m = fit(&points, QUADRATIC_GATE_PX, screen).map_err(|e| e.to_string())?;
    ensure(m.status == CalibrationStatus::Passed && m.rms_error <= QUADRATIC_MAX_RMS, || {
        format!("noisy quadratic {:?} rms {}", m.status, m.rms_error)
    })?;

    let mut mapper = GazeMapper::new(0.5);
    let probe = PupilObservation { centre: Point::new(160.0, 120.0), radius_estimate: 12.0, confidence: 1.0, occluded: false, timestamp: 0 };
    ensure(mapper.map(0, Some(&probe)) == Err(CalibError::CalibrationRequired), || "mapping allowed before a passed fit".into())?;
    Ok(format!("identity rms {id_rms:.1e}, affine rms {aff_rms:.1e}, noisy quadratic rms {:.3} px, lockout holds", m.rms_error))
}

fn fixation_oracle() -> Outcome {
    let start = Instant::now();
    let micro = support::fixation::exhaustive_micro_cases();
    support::fixation::randomized_sweep(0x1D7, ORACLE_CASES);
    let took = start.elapsed();
    ensure(took < FIXATION_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("identical on {micro} exhaustive micro-streams and {ORACLE_CASES} random streams of <= 50 samples"))
}

fn dwell_properties() -> Outcome {
    support::dwell::prefix_oracle_sweep(ORACLE_CASES);
    support::dwell::one_click_per_episode(ORACLE_CASES);
    support::dwell::blink_splice_continuity(ORACLE_CASES);
    support::dwell::dwell_monotonicity(ORACLE_CASES);
    Ok(format!("prefix oracle, one click per episode, blink splice and monotonicity hold on {ORACLE_CASES} replays each"))
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_eyeguide"))
            .args(["--seed", &SEED.to_string(), "--report", path.to_str().unwrap(), "experiment"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))?;
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], || "reports differ".into())?;
    Ok(format!("two `experiment --seed {SEED}` reports are byte-identical ({} bytes)", outputs[0].len()))
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let results = [
        criterion("distance averages", distance_averages),
        criterion("distance trend", distance_trend),
        criterion("angle robustness", angle_robustness),
        criterion("detector accuracy", detector_accuracy),
        criterion("calibration", calibration),
        criterion("fixation oracle", fixation_oracle),
        criterion("dwell properties", dwell_properties),
        criterion("end-to-end determinism", end_to_end_determinism),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
