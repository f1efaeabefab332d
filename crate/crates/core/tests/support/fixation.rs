//! Brute-force I-DT oracle and stream generators.
//!
//! The oracle labels every sample, recomputes each window's dispersion from
//! scratch, and assembles events from the per-sample labels. Streams use a
//! 5×5 coordinate grid so dispersion ties and threshold edges come up often.

use eyeguide_core::calib::GazeSample;
use eyeguide_core::filter::{detect_fixations, EventKind, FilterConfig, FixationDetector, GazeEvent};
use eyeguide_core::{Millis, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID_STEP: f64 = 10.0;

pub fn cfg() -> FilterConfig {
    FilterConfig { smooth_window: 1, dispersion_threshold: 25.0, min_fixation_duration: 100, blink_hold: 120 }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Label {
    Fixation(usize),
    Saccade(usize),
    Gap(EventKind),
    Bridged,
}

fn dispersion(pts: &[Point]) -> f64 {
    let fold = |f: fn(f64, f64) -> f64, g: fn(&Point) -> f64, init: f64| pts.iter().map(g).fold(init, f);
    let (x0, x1) = (fold(f64::min, |p| p.x, f64::INFINITY), fold(f64::max, |p| p.x, f64::NEG_INFINITY));
    let (y0, y1) = (fold(f64::min, |p| p.y, f64::INFINITY), fold(f64::max, |p| p.y, f64::NEG_INFINITY));
    (x1 - x0) + (y1 - y0)
}

/// Labels for one segment of observed samples (`idx` into `samples`).
fn label_segment(samples: &[GazeSample], idx: &[usize], seg_id: usize, cfg: &FilterConfig, labels: &mut [Label]) {
    let m = idx.len();
    let t = |k: usize| samples[idx[k]].timestamp;
    let window = |a: usize, b: usize| idx[a..=b].iter().map(|&k| samples[k].pos()).collect::<Vec<_>>();
    let mut i = 0;
    while i < m {
        let Some(j0) = (i + 1..m).find(|&j| t(j) - t(i) >= cfg.min_fixation_duration) else {
            for k in i..m {
                labels[idx[k]] = Label::Saccade(seg_id);
            }
            return;
        };
        if dispersion(&window(i, j0)) > cfg.dispersion_threshold {
            labels[idx[i]] = Label::Saccade(seg_id);
            i += 1;
            continue;
        }
        let mut j = j0;
        while j + 1 < m && dispersion(&window(i, j + 1)) <= cfg.dispersion_threshold {
            j += 1;
        }
        for k in i..=j {
            labels[idx[k]] = Label::Fixation(idx[i]);
        }
        if j + 1 < m {
            labels[idx[j + 1]] = Label::Saccade(seg_id);
        }
        i = j + 2;
    }
}

pub fn oracle(samples: &[GazeSample], cfg: &FilterConfig) -> Vec<GazeEvent> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let t = |k: usize| samples[k].timestamp;
    let observed = |k: usize| samples[k].valid && !samples[k].held;
    let mut labels = vec![Label::Bridged; n];
    let mut nested = Vec::new();

    // gaps first: they decide where segments end
    let mut k = 0;
    while k < n {
        if observed(k) {
            k += 1;
            continue;
        }
        let a = k;
        while k < n && !observed(k) {
            k += 1;
        }
        let until = if k < n { t(k) } else { t(k - 1) };
        let kind = if until - t(a) < cfg.blink_hold { EventKind::Blink } else { EventKind::SignalLost };
        let bridged = kind == EventKind::Blink && a > 0 && k < n;
        if bridged {
            nested.push(GazeEvent { kind, start: t(a), end: t(k), centroid: None });
        }
        for l in &mut labels[a..k] {
            *l = if bridged { Label::Bridged } else { Label::Gap(kind) };
        }
    }
    // segments: observed samples between unbridged gaps
    let mut seg = Vec::new();
    let mut seg_id = 0;
    for k in 0..=n {
        let boundary = k == n || matches!(labels[k], Label::Gap(_));
        if boundary {
            label_segment(samples, &seg, seg_id, cfg, &mut labels);
            seg.clear();
            seg_id += 1;
        } else if observed(k) {
            seg.push(k);
        }
    }
    // top-level events are maximal runs of equal labels, ignoring bridged samples;
    // every unbridged gap sample run is one event
    let mut starts: Vec<(usize, Label)> = Vec::new();
    for k in 0..n {
        if labels[k] == Label::Bridged {
            continue;
        }
        let new_run = match starts.last() {
            None => true,
            Some(&(_, prev)) => prev != labels[k] || (matches!(prev, Label::Gap(_)) && !matches!(labels[k - 1], Label::Gap(_))),
        };
        if new_run {
            starts.push((k, labels[k]));
        }
    }
    let mut events: Vec<GazeEvent> = starts
        .iter()
        .enumerate()
        .map(|(r, &(k, label))| {
            let end = starts.get(r + 1).map_or(t(n - 1) + 1, |&(next, _)| t(next));
            let (kind, centroid) = match label {
                Label::Fixation(_) => {
                    let members: Vec<Point> =
                        (0..n).filter(|&q| labels[q] == label).map(|q| samples[q].pos()).collect();
                    let m = members.len() as f64;
                    let sum = members.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
                    (EventKind::Fixation, Some(Point::new(sum.0 / m, sum.1 / m)))
                }
                Label::Saccade(_) => (EventKind::Saccade, None),
                Label::Gap(kind) => (kind, None),
                Label::Bridged => unreachable!(),
            };
            GazeEvent { kind, start: t(k), end, centroid }
        })
        .collect();
    events.extend(nested);
    events.sort_by_key(|e| e.start);
    events
}

pub fn check(samples: &[GazeSample], cfg: &FilterConfig) {
    let got = detect_fixations(samples, cfg).unwrap();
    let want = oracle(samples, cfg);
    assert_eq!(got, want, "stream: {samples:?}");

    let mut det = FixationDetector::new(cfg.clone());
    let mut streamed: Vec<GazeEvent> = samples.iter().flat_map(|s| det.push(*s).unwrap()).collect();
    streamed.extend(det.flush());
    assert_eq!(streamed, got, "streaming differs from batch for {samples:?}");
}

/// Symbol 0 is invalid, 1 is a held repeat, 2.. index the grid.
pub fn sample(t: Millis, symbol: usize) -> GazeSample {
    match symbol {
        0 => GazeSample::invalid(t),
        1 => GazeSample { held: true, ..GazeSample::valid(t, 0.0, 0.0) },
        s => {
            let g = s - 2;
            GazeSample::valid(t, (g % 5) as f64 * GRID_STEP, (g / 5) as f64 * GRID_STEP)
        }
    }
}


pub fn random_stream(rng: &mut ChaCha8Rng) -> Vec<GazeSample> {
    let len = rng.random_range(0..=50);
    let mut t: Millis = rng.random_range(0..100);
    let (mut gx, mut gy) = (rng.random_range(0..5i32), rng.random_range(0..5i32));
    let mut out = Vec::with_capacity(len);
    let mut gap_left = 0;
    while out.len() < len {
        if gap_left == 0 && rng.random_bool(0.08) {
            gap_left = rng.random_range(1..=8);
        }
        if gap_left > 0 {
            gap_left -= 1;
            let held = rng.random_bool(0.3);
            out.push(if held {
                GazeSample { held: true, ..GazeSample::valid(t, gx as f64 * GRID_STEP, gy as f64 * GRID_STEP) }
            } else {
                GazeSample::invalid(t)
            });
        } else {
            if rng.random_bool(0.25) {
                gx = (gx + rng.random_range(-2..=2)).clamp(0, 4);
                gy = (gy + rng.random_range(-2..=2)).clamp(0, 4);
            }
            out.push(GazeSample::valid(t, gx as f64 * GRID_STEP, gy as f64 * GRID_STEP));
        }
        t += rng.random_range(10..=60);
    }
    out
}

/// Every stream of length 1 to 3 over all 27 symbols, then every length-5
/// stream over invalid, held and five diagonal grid points. Returns the case count.
pub fn exhaustive_micro_cases() -> usize {
    let cfg = cfg();
    let alphabet: usize = 27;
    let mut cases = 0;
    for len in 1..=3u32 {
        for code in 0..alphabet.pow(len) {
            let mut c = code;
            let stream: Vec<GazeSample> = (0..len as usize)
                .map(|i| {
                    let s = sample(i as Millis * 50, c % alphabet);
                    c /= alphabet;
                    s
                })
                .collect();
            check(&stream, &cfg);
            cases += 1;
        }
    }
    let symbols = [0, 1, 2, 8, 14, 20, 26];
    for code in 0..symbols.len().pow(5) {
        let mut c = code;
        let stream: Vec<GazeSample> = (0..5)
            .map(|i| {
                let s = sample(i as Millis * 50, symbols[c % symbols.len()]);
                c /= symbols.len();
                s
            })
            .collect();
        check(&stream, &cfg);
        cases += 1;
    }
    cases
}

/// `cases` random streams of up to 50 samples on the 5×5 grid.
pub fn randomized_sweep(seed: u64, cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = cfg();
    for _ in 0..cases {
        check(&random_stream(&mut rng), &cfg);
    }
}
