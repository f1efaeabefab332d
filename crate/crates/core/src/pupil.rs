//! Dark-pupil detection.
//!
//! The frame is binarized at a threshold, 4-connected dark components are
//! labelled, and the largest component whose area and circularity are
//! plausible for a pupil is reported with its intensity-weighted centroid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Millis, Point};
use crate::sim::{encode_pgm, EyeFrame};

#[derive(Debug, Error, PartialEq)]
pub enum DetectorConfigError {
    #[error("min_area ({min}) must be below max_area ({max})")]
    AreaRange { min: usize, max: usize },
    #[error("percentile {0} outside (0, 0.5]")]
    Percentile(f64),
    #[error("circularity_floor {0} outside [0, 1]")]
    Circularity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    Fixed,
    AdaptivePercentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub threshold_mode: ThresholdMode,
    /// Pixels at or below this level are dark in fixed mode.
    pub fixed_threshold: u8,
    /// Low histogram percentile used as the dark reference in adaptive mode.
    pub percentile: f64,
    pub min_area: usize,
    pub max_area: usize,
    pub circularity_floor: f64,
    /// Adaptive mode reports no pupil when the median and the dark reference
    /// are closer than this many gray levels.
    pub min_contrast: u8,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold_mode: ThresholdMode::AdaptivePercentile,
            fixed_threshold: 80,
            percentile: 0.001,
            min_area: 30,
            max_area: 5000,
            circularity_floor: 0.3,
            min_contrast: 25,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorConfigError> {
        if self.min_area >= self.max_area {
            return Err(DetectorConfigError::AreaRange { min: self.min_area, max: self.max_area });
        }
        if !(self.percentile > 0.0 && self.percentile <= 0.5) {
            return Err(DetectorConfigError::Percentile(self.percentile));
        }
        if !(0.0..=1.0).contains(&self.circularity_floor) {
            return Err(DetectorConfigError::Circularity(self.circularity_floor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PupilObservation {
    /// Sub-pixel centre in frame pixel coordinates.
    pub centre: Point,
    pub radius_estimate: f64,
    /// Circularity of the detected blob, in [0, 1].
    pub confidence: f64,
    /// The blob looks cut off vertically (eyelid or blink onset).
    pub occluded: bool,
    pub timestamp: Millis,
}

/// Binarized frame. `None` threshold means the frame had too little contrast
/// to contain a pupil.
#[derive(Debug, Clone)]
pub struct DarkMask {
    pub width: u32,
    pub height: u32,
    pub threshold: Option<u8>,
    pub dark: Vec<bool>,
}

impl DarkMask {
    /// Debug rendering: dark pixels black, everything else white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let px: Vec<u8> = self.dark.iter().map(|&d| if d { 0 } else { 255 }).collect();
        encode_pgm(self.width, self.height, &px)
    }
}

/// Threshold a frame would be binarized at under `cfg`.
pub fn threshold(frame: &EyeFrame, cfg: &DetectorConfig) -> Option<u8> {
    match cfg.threshold_mode {
        ThresholdMode::Fixed => Some(cfg.fixed_threshold),
        ThresholdMode::AdaptivePercentile => {
            let mut hist = [0usize; 256];
            for &p in frame.pixels() {
                hist[p as usize] += 1;
            }
            let n = frame.pixels().len();
            let dark_ref = quantile(&hist, n, cfg.percentile);
            let median = quantile(&hist, n, 0.5);
            if median.saturating_sub(dark_ref) < cfg.min_contrast {
                return None;
            }
            // midway between the darkest population and the background
            Some(((dark_ref as u16 + median as u16) / 2) as u8)
        }
    }
}

/// Smallest gray level whose cumulative count exceeds `q * n` pixels.
fn quantile(hist: &[usize; 256], n: usize, q: f64) -> u8 {
    let rank = ((q * n as f64).floor() as usize).min(n.saturating_sub(1));
    let mut seen = 0;
    for (level, &count) in hist.iter().enumerate() {
        seen += count;
        if seen > rank {
            return level as u8;
        }
    }
    255
}

pub fn binarize(frame: &EyeFrame, cfg: &DetectorConfig) -> DarkMask {
    let t = threshold(frame, cfg);
    let dark = match t {
        Some(t) => frame.pixels().iter().map(|&p| p <= t).collect(),
        None => vec![false; frame.pixels().len()],
    };
    DarkMask { width: frame.width(), height: frame.height(), threshold: t, dark }
}

#[derive(Debug, Clone)]
struct Component {
    pixels: Vec<(u32, u32)>,
    min_y: u32,
    max_y: u32,
}

/// 4-connected labelling of the dark pixels.
fn components(mask: &DarkMask) -> (Vec<Component>, Vec<u32>) {
    const NONE: u32 = u32::MAX;
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut labels = vec![NONE; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.dark[start] || labels[start] != NONE {
            continue;
        }
        let id = out.len() as u32;
        let mut comp = Component { pixels: Vec::new(), min_y: u32::MAX, max_y: 0 };
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.pixels.push((x as u32, y as u32));
            comp.min_y = comp.min_y.min(y as u32);
            comp.max_y = comp.max_y.max(y as u32);
            let mut visit = |j: usize| {
                if mask.dark[j] && labels[j] == NONE {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(comp);
    }
    (out, labels)
}

// Moore neighbourhood, clockwise on a y-down image starting at west.
const MOORE: [(i32, i32); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn moore_index(d: (i32, i32)) -> usize {
    MOORE.iter().position(|&m| m == d).expect("unit step")
}

/// Length of the outer boundary traced through pixel centres (Moore
/// neighbour tracing with Jacob's stopping rule).
fn perimeter(labels: &[u32], width: u32, height: u32, id: u32, start: (u32, u32), area: usize) -> f64 {
    let inside = |x: i32, y: i32| {
        x >= 0
            && y >= 0
            && (x as u32) < width
            && (y as u32) < height
            && labels[(y as u32 * width + x as u32) as usize] == id
    };
    let start = (start.0 as i32, start.1 as i32);
    let mut contour = vec![start];
    let mut cur = start;
    // the raster-order first pixel always has a background west neighbour
    let mut back = 0usize;
    let limit = 4 * area + 16;
    while contour.len() <= limit {
        let mut found = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let n = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
            if inside(n.0, n.1) {
                found = Some((n, d));
                break;
            }
        }
        let Some((next, d)) = found else { break };
        if cur == start && contour.len() > 1 && next == contour[1] {
            break;
        }
        let prev = MOORE[(d + 7) % 8];
        let prev_abs = (cur.0 + prev.0, cur.1 + prev.1);
        back = moore_index((prev_abs.0 - next.0, prev_abs.1 - next.1));
        contour.push(next);
        cur = next;
    }
    contour
        .windows(2)
        .map(|s| if s[0].0 != s[1].0 && s[0].1 != s[1].1 { std::f64::consts::SQRT_2 } else { 1.0 })
        .sum()
}

/// Locates the pupil in `frame`, or `None` when no dark blob qualifies.
pub fn detect(frame: &EyeFrame, cfg: &DetectorConfig) -> Option<PupilObservation> {
    let mask = binarize(frame, cfg);
    let t = mask.threshold? as f64;
    let (comps, labels) = components(&mask);

    let mut best: Option<(usize, f64)> = None;
    for (id, c) in comps.iter().enumerate() {
        let area = c.pixels.len();
        if area < cfg.min_area || area > cfg.max_area {
            continue;
        }
        if best.is_some_and(|(b, _)| comps[b].pixels.len() >= area) {
            continue;
        }
        let p = perimeter(&labels, mask.width, mask.height, id as u32, c.pixels[0], area);
        let circularity = if p > 0.0 { (4.0 * PI * area as f64 / (p * p)).clamp(0.0, 1.0) } else { 0.0 };
        if circularity < cfg.circularity_floor {
            continue;
        }
        best = Some((id, circularity));
    }
    let (id, confidence) = best?;
    let c = &comps[id];

    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &(x, y) in &c.pixels {
        let w = t - frame.get(x, y) as f64 + 1.0;
        sw += w;
        sx += w * x as f64;
        sy += w * y as f64;
    }
    let area = c.pixels.len() as f64;
    let radius_estimate = (area / PI).sqrt();
    let bbox_h = (c.max_y - c.min_y + 1) as f64;
    let occluded = 1.0 - bbox_h / (2.0 * radius_estimate) > 0.2;

    Some(PupilObservation {
        centre: Point::new(sx / sw, sy / sw),
        radius_estimate,
        confidence,
        occluded,
        timestamp: frame.timestamp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{PupilPath, SimScenario};

    fn frame(x: f64, y: f64, f: impl FnOnce(&mut SimScenario)) -> EyeFrame {
        let mut s = SimScenario::new(1000, PupilPath::Fixed { x, y });
        f(&mut s);
        s.render_frame(0).unwrap().0
    }

    #[test]
    fn finds_noiseless_disk() {
        let obs = detect(&frame(100.0, 80.0, |_| {}), &DetectorConfig::default()).unwrap();
        assert!(obs.centre.distance(Point::new(100.0, 80.0)) < 0.5);
        assert!(!obs.occluded);
        assert!(obs.confidence >= 0.9, "confidence {}", obs.confidence);
        assert!((obs.radius_estimate - 12.0).abs() < 0.5);
    }

    #[test]
    fn closed_eye_has_no_pupil() {
        let f = frame(100.0, 80.0, |s| s.blink_intervals = vec![(0, 10)]);
        assert_eq!(detect(&f, &DetectorConfig::default()), None);
        let f = frame(100.0, 80.0, |s| {
            s.blink_intervals = vec![(0, 10)];
            s.appearance.noise_sigma = 5.0;
        });
        assert_eq!(detect(&f, &DetectorConfig::default()), None);
    }

    #[test]
    fn eyelid_shifts_centre_vertically_only() {
        let f = frame(100.0, 80.0, |s| s.appearance.eyelid_coverage = 0.4);
        let obs = detect(&f, &DetectorConfig::default()).unwrap();
        assert!((obs.centre.x - 100.0).abs() <= 1.0);
        let dy = obs.centre.y - 80.0;
        assert!(dy > 0.0 && dy <= 0.4 * 12.0 + 0.5, "dy {dy}");
        assert!(obs.occluded);
    }

    #[test]
    fn fixed_threshold_mode() {
        let cfg = DetectorConfig { threshold_mode: ThresholdMode::Fixed, ..Default::default() };
        let obs = detect(&frame(60.0, 50.0, |_| {}), &cfg).unwrap();
        assert!(obs.centre.distance(Point::new(60.0, 50.0)) < 1e-9);
    }

    #[test]
    fn too_small_or_too_large_blobs_are_rejected() {
        let f = frame(100.0, 80.0, |s| s.appearance.pupil_radius = 2.0);
        assert_eq!(detect(&f, &DetectorConfig::default()), None);
        let f = frame(160.0, 120.0, |s| s.appearance.pupil_radius = 60.0);
        assert_eq!(detect(&f, &DetectorConfig::default()), None);
    }

    #[test]
    fn thin_streak_fails_circularity() {
        // a one-pixel-high dark line is far from round
        let mut px = vec![200u8; 320 * 240];
        for x in 50..150 {
            px[100 * 320 + x] = 20;
        }
        let f = EyeFrame::new(320, 240, px, 0).unwrap();
        assert_eq!(detect(&f, &DetectorConfig::default()), None);
    }

    #[test]
    fn perimeter_of_small_shapes() {
        // 3x3 square: contour through centres is 8 unit steps
        let w = 5;
        let mut labels = vec![u32::MAX; 25];
        for y in 1..4 {
            for x in 1..4 {
                labels[y * w + x] = 0;
            }
        }
        let p = perimeter(&labels, 5, 5, 0, (1, 1), 9);
        assert!((p - 8.0).abs() < 1e-12, "{p}");
        // single pixel has no length
        let mut labels = vec![u32::MAX; 25];
        labels[12] = 0;
        assert_eq!(perimeter(&labels, 5, 5, 0, (2, 2), 1), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = DetectorConfig::default();
        assert!(c.validate().is_ok());
        c.percentile = 0.6;
        assert_eq!(c.validate(), Err(DetectorConfigError::Percentile(0.6)));
        c = DetectorConfig { min_area: 10, max_area: 10, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn mask_dump_is_pgm() {
        let f = frame(100.0, 80.0, |_| {});
        let m = binarize(&f, &DetectorConfig::default());
        let pgm = m.to_pgm();
        assert!(pgm.starts_with(b"P5\n320 240\n255\n"));
        assert_eq!(m.dark.iter().filter(|&&d| d).count(), 441);
    }
}
