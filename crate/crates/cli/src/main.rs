//! `eyeguide`: command-line entry point for the gaze pipeline.
//!
//! Exit status: 0 on success, 2 for invalid configuration or arguments,
//! 3 when calibration does not pass its gate, 1 for anything else.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use eyeguide_core::calib::{CalibError, CalibrationModel};
use eyeguide_core::config::Config;
use eyeguide_core::harness::{calibration_outcome, replay_scanpath, run_experiment, HarnessError, LiveSession};
use eyeguide_core::io::{read_scanpath, write_click_log, write_gaze_log, write_ground_truth};
use eyeguide_core::messenger::{CommandSink, NullSink, SpeechSink};
use eyeguide_core::pupil::{binarize, detect};
use eyeguide_core::sim::SimScenario;
use eyeguide_server::Hub;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "eyeguide", version, about = "Camera-free gaze interaction pipeline and experiment harness")]
struct Cli {
    /// JSON configuration file; every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where the command's JSON report goes (stdout when omitted).
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Repeat for more logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a scripted scenario to PGM frames plus a ground-truth CSV.
    Simulate {
        /// Scenario JSON; defaults to the config's `simulation` section.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
        /// Also write the detector's binarized mask for every frame.
        #[arg(long)]
        dump_mask: bool,
    },
    /// Calibrate the simulated user and persist the fitted model.
    Calibrate {
        #[arg(long, default_value = "calibration.json")]
        model: PathBuf,
        /// Viewing distance in inches; defaults to `run.distance_in`.
        #[arg(long)]
        distance: Option<f64>,
        /// Face rotation in the camera image, degrees.
        #[arg(long, default_value_t = 0.0)]
        tilt: f64,
    },
    /// Live loop: the simulated user drives the messenger while the UI
    /// protocol is served over WebSocket.
    Run {
        /// Previously persisted model; calibrates afresh when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Overrides the configured port (0 picks a free one).
        #[arg(long)]
        port: Option<u16>,
        /// Run frames as fast as possible instead of in real time.
        #[arg(long)]
        fast: bool,
        /// Click log destination.
        #[arg(long)]
        clicks: Option<PathBuf>,
        /// Gaze log destination: filtered samples with event labels.
        #[arg(long)]
        gaze_log: Option<PathBuf>,
    },
    /// Feed a scanpath CSV through filtering and dwell clicking on the
    /// messenger layout.
    Replay {
        /// CSV with header `timestamp,x,y,valid`.
        scanpath: PathBuf,
        /// Click log destination (stdout when omitted).
        #[arg(long)]
        clicks: Option<PathBuf>,
        /// Gaze log destination: filtered samples with event labels.
        #[arg(long)]
        gaze_log: Option<PathBuf>,
    },
    /// Run the distance and angle series and write the report.
    Experiment,
}

/// Error with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self { code: 1, error: e.into() }
    }
}

fn harness_failure(e: HarnessError) -> Failure {
    let code = match &e {
        HarnessError::CalibrationFailed { .. } | HarnessError::Calibration(CalibError::CalibrationRequired) => 3,
        HarnessError::Config(_) | HarnessError::InsufficientData(_) => 2,
        HarnessError::Calibration(_) => 1,
    };
    Failure { code, error: e.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut cfg = Config::load(cli.config.as_deref()).map_err(Failure::usage)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
        if let Some(sim) = &mut cfg.simulation {
            sim.appearance.seed = seed;
        }
    }
    let report = cli.report.as_deref();
    match cli.command {
        Command::Simulate { scenario, out, dump_mask } => simulate(&cfg, cli.seed, scenario.as_deref(), &out, dump_mask),
        Command::Calibrate { model, distance, tilt } => calibrate(&cfg, &model, distance, tilt, report),
        Command::Run { model, port, fast, clicks, gaze_log } => {
            if let Some(p) = port {
                cfg.server.port = p;
            }
            if fast {
                cfg.run.realtime = false;
            }
            live(&cfg, model.as_deref(), clicks.as_deref(), gaze_log.as_deref(), report)
        }
        Command::Replay { scanpath, clicks, gaze_log } => replay(&cfg, &scanpath, clicks.as_deref(), gaze_log.as_deref(), report),
        Command::Experiment => experiment(&cfg, report),
    }
}

/// Writes `bytes` to `path`, or stdout when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn simulate(cfg: &Config, seed: Option<u64>, scenario: Option<&Path>, out: &Path, dump_mask: bool) -> Result<(), Failure> {
    let scenario = match scenario {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::usage)?;
            let mut s = SimScenario::from_json(&text).map_err(Failure::usage)?;
            if let Some(seed) = seed {
                s.appearance.seed = seed;
            }
            s
        }
        None => cfg
            .simulation
            .clone()
            .ok_or_else(|| Failure::usage(anyhow!("no scenario: pass --scenario or add a `simulation` section")))?,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut rows = Vec::with_capacity(scenario.frame_count());
    for (frame, truth) in scenario.play().map_err(Failure::usage)? {
        frame.write_pgm(out)?;
        if dump_mask {
            let mask = binarize(&frame, &cfg.detector);
            fs::write(out.join(format!("mask_{}.pgm", frame.timestamp())), mask.to_pgm())?;
        }
        rows.push((truth, detect(&frame, &cfg.detector)));
    }
    write_ground_truth(fs::File::create(out.join("ground_truth.csv"))?, &rows)?;
    log::info!("wrote {} frames to {}", rows.len(), out.display());
    Ok(())
}

fn calibrate(cfg: &Config, model_path: &Path, distance: Option<f64>, tilt: f64, report: Option<&Path>) -> Result<(), Failure> {
    let distance = distance.unwrap_or(cfg.run.distance_in);
    if !(distance > 0.0) {
        return Err(Failure::usage(anyhow!("--distance must be positive")));
    }
    let outcome = calibration_outcome(&cfg.experiment, &cfg.pipeline(), &cfg.calibration, distance, tilt)
        .map_err(harness_failure)?;
    fs::write(model_path, outcome.model.to_json()).with_context(|| format!("writing {}", model_path.display()))?;
    emit(report, &pretty(&serde_json::to_value(&outcome.report).expect("report serializes")))?;
    if !outcome.model.passed() {
        return Err(harness_failure(HarnessError::CalibrationFailed {
            rms_px: outcome.model.rms_error,
            threshold_px: outcome.model.pass_threshold,
        }));
    }
    Ok(())
}

fn load_or_calibrate(cfg: &Config, path: Option<&Path>) -> Result<CalibrationModel, Failure> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::usage)?;
            let model = CalibrationModel::from_json(&text).map_err(Failure::usage)?;
            if !model.passed() {
                return Err(harness_failure(HarnessError::Calibration(CalibError::CalibrationRequired)));
            }
            Ok(model)
        }
        None => {
            let outcome = calibration_outcome(&cfg.experiment, &cfg.pipeline(), &cfg.calibration, cfg.run.distance_in, 0.0)
                .map_err(harness_failure)?;
            if !outcome.model.passed() {
                return Err(harness_failure(HarnessError::CalibrationFailed {
                    rms_px: outcome.model.rms_error,
                    threshold_px: outcome.model.pass_threshold,
                }));
            }
            Ok(outcome.model)
        }
    }
}

fn speech_sink(cfg: &Config) -> Box<dyn SpeechSink + Send> {
    match cfg.messenger.speaker_command.as_deref().and_then(CommandSink::from_command_line) {
        Some(sink) => Box::new(sink),
        None => Box::new(NullSink::default()),
    }
}

fn live(
    cfg: &Config,
    model_path: Option<&Path>,
    clicks: Option<&Path>,
    gaze_log: Option<&Path>,
    report: Option<&Path>,
) -> Result<(), Failure> {
    let model = load_or_calibrate(cfg, model_path)?;
    let mut session = LiveSession::new(cfg, model, speech_sink(cfg)).map_err(harness_failure)?;
    let addr: SocketAddr = format!("{}:{}", cfg.server.host, cfg.server.port)
        .parse()
        .map_err(|e| Failure::usage(anyhow!("server address: {e}")))?;
    let ui_dir = cfg.server.ui_dir.as_deref().map(|d| cfg.resolve(d));

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let (hub, mut pointer) =
            Hub::new(session.messenger().layout().clone(), cfg.dwell.clone(), session.messenger().state().clone());
        let server = eyeguide_server::spawn(addr, hub.clone(), ui_dir).await?;
        eprintln!("serving ws://{}{}", server.addr, eyeguide_server::WS_PATH);

        let mut ticker = tokio::time::interval(Duration::from_secs_f64(session.frame_interval_ms() / 1000.0));
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let interrupted = tokio::signal::ctrl_c();
        tokio::pin!(interrupted);
        loop {
            if session.script_done() && !cfg.run.keep_serving {
                break;
            }
            if cfg.run.realtime {
                tokio::select! {
                    _ = ticker.tick() => {}
                    _ = &mut interrupted => break,
                }
            } else {
                tokio::task::yield_now().await;
            }
            while let Ok(p) = pointer.try_recv() {
                session.pointer_override(p);
            }
            hub.publish(session.step().map_err(harness_failure)?);
        }
        server.shutdown().await?;
        Ok::<(), Failure>(())
    })?;

    if let Some(p) = clicks {
        write_click_log(fs::File::create(p)?, session.clicks())?;
    }
    if let Some(p) = gaze_log {
        write_gaze_log(fs::File::create(p)?, session.pipeline().gaze_log(), &session.pipeline().events())?;
    }
    let summary = json!({
        "duration_ms": session.now(),
        "clicks": session.clicks().iter().map(|c| json!({"at": c.at, "target_id": c.target_id})).collect::<Vec<_>>(),
        "state": session.messenger().state(),
        "spoken": session.sink().log().iter().map(|i| i.text.clone()).collect::<Vec<_>>(),
    });
    emit(report, &pretty(&summary))
}

fn replay(
    cfg: &Config,
    scanpath: &Path,
    clicks: Option<&Path>,
    gaze_log: Option<&Path>,
    report: Option<&Path>,
) -> Result<(), Failure> {
    let file = fs::File::open(scanpath).with_context(|| format!("opening {}", scanpath.display())).map_err(Failure::usage)?;
    let samples = read_scanpath(file).map_err(Failure::usage)?;
    let layout = cfg.messenger_layout().map_err(Failure::usage)?;
    let out = replay_scanpath(&samples, layout.dwell_layout(), &cfg.pipeline()).map_err(harness_failure)?;

    let mut buf = Vec::new();
    write_click_log(&mut buf, &out.clicks)?;
    emit(clicks, &buf)?;
    if let Some(p) = gaze_log {
        write_gaze_log(fs::File::create(p)?, &out.samples, &out.events)?;
    }
    if let Some(p) = report {
        let summary = json!({
            "samples": out.samples.len(),
            "events": out.events.len(),
            "clicks": out.clicks.len(),
        });
        emit(Some(p), &pretty(&summary))?;
    }
    Ok(())
}

fn fmt_avg(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |a| format!("{a:.2}"))
}

fn experiment(cfg: &Config, report: Option<&Path>) -> Result<(), Failure> {
    let r = run_experiment(&cfg.experiment, &cfg.pipeline(), &cfg.calibration).map_err(harness_failure)?;
    if let Some(d) = &r.distance_series {
        for row in &d.rows {
            log::info!("{}: average {} s", row.cell, fmt_avg(row.average));
        }
    }
    if let Some(a) = &r.angle_series {
        for row in &a.rows {
            let (avg, pupil, cursor) = (fmt_avg(row.average), row.pupil_detected, row.cursor_ok);
            log::info!("{}: average {avg} s, pupil {pupil}, cursor {cursor}", row.cell);
        }
    }
    emit(report, r.to_json().as_bytes())
}
