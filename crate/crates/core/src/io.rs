//! CSV logs.
//!
//! * Gaze log: `timestamp,x,y,valid,event_kind`, one row per sample. The
//!   event kind is the innermost event covering the sample, empty if none.
//!   A gaze log doubles as a scanpath input for replay.
//! * Click log: `timestamp,target_id,x,y`, one row per click.
//! * Ground truth: `timestamp,true_x,true_y,blink,detected_x,detected_y,confidence`,
//!   one row per simulated frame. Missing values are empty.

use std::io::{Read, Write};

use thiserror::Error;

use crate::calib::GazeSample;
use crate::dwell::ClickEvent;
use crate::filter::GazeEvent;
use crate::geom::{Millis, Point};
use crate::pupil::PupilObservation;
use crate::sim::GroundTruth;

pub const GAZE_HEADER: [&str; 5] = ["timestamp", "x", "y", "valid", "event_kind"];
pub const CLICK_HEADER: [&str; 4] = ["timestamp", "target_id", "x", "y"];
pub const TRUTH_HEADER: [&str; 7] = ["timestamp", "true_x", "true_y", "blink", "detected_x", "detected_y", "confidence"];

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.3}")
}

/// Innermost event covering `t`. Nested events start later than their
/// enclosing event, so the covering event with the latest start wins.
fn kind_at(events: &[GazeEvent], t: Millis) -> &'static str {
    events
        .iter()
        .filter(|e| e.start <= t && t < e.end)
        .max_by_key(|e| e.start)
        .map_or("", |e| e.kind.as_str())
}

pub fn write_gaze_log<W: Write>(w: W, samples: &[GazeSample], events: &[GazeEvent]) -> Result<(), LogError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(GAZE_HEADER)?;
    for s in samples {
        out.write_record([
            s.timestamp.to_string(),
            fmt_coord(s.x),
            fmt_coord(s.y),
            u8::from(s.valid).to_string(),
            kind_at(events, s.timestamp).to_owned(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn parse<T: std::str::FromStr>(row: usize, field: &str, what: &str) -> Result<T, LogError> {
    field.trim().parse().map_err(|_| LogError::Parse { row, msg: format!("bad {what} {field:?}") })
}

fn parse_bool(row: usize, field: &str) -> Result<bool, LogError> {
    match field.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(LogError::Parse { row, msg: format!("bad valid flag {other:?}") }),
    }
}

/// Reads a scanpath: the first four gaze-log columns are required, any
/// further columns are ignored.
pub fn read_scanpath<R: Read>(r: R) -> Result<Vec<GazeSample>, LogError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 4 || header[..4] != GAZE_HEADER[..4] {
        return Err(LogError::Header(header));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() < 4 {
            return Err(LogError::Parse { row, msg: format!("expected at least 4 fields, got {}", rec.len()) });
        }
        let t: Millis = parse(row, &rec[0], "timestamp")?;
        let valid = parse_bool(row, &rec[3])?;
        let s = if valid {
            GazeSample::valid(t, parse(row, &rec[1], "x")?, parse(row, &rec[2], "y")?)
        } else {
            GazeSample::invalid(t)
        };
        out.push(s);
    }
    Ok(out)
}

pub fn write_click_log<W: Write>(w: W, clicks: &[ClickEvent]) -> Result<(), LogError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CLICK_HEADER)?;
    for c in clicks {
        out.write_record([
            c.at.to_string(),
            c.target_id.clone(),
            fmt_coord(c.gaze_anchor.x),
            fmt_coord(c.gaze_anchor.y),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Simulated frames next to what the detector made of them.
pub fn write_ground_truth<W: Write>(w: W, rows: &[(GroundTruth, Option<PupilObservation>)]) -> Result<(), LogError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRUTH_HEADER)?;
    let opt = |v: Option<f64>| v.map(fmt_coord).unwrap_or_default();
    for (truth, obs) in rows {
        out.write_record([
            truth.timestamp.to_string(),
            opt(truth.centre.map(|c| c.x)),
            opt(truth.centre.map(|c| c.y)),
            u8::from(truth.is_blink()).to_string(),
            opt(obs.as_ref().map(|o| o.centre.x)),
            opt(obs.as_ref().map(|o| o.centre.y)),
            opt(obs.as_ref().map(|o| o.confidence)),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_click_log<R: Read>(r: R) -> Result<Vec<ClickEvent>, LogError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != CLICK_HEADER {
        return Err(LogError::Header(header));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        out.push(ClickEvent {
            at: parse(row, &rec[0], "timestamp")?,
            target_id: rec[1].to_owned(),
            gaze_anchor: Point::new(parse(row, &rec[2], "x")?, parse(row, &rec[3], "y")?),
        });
    }
    Ok(out)
}
