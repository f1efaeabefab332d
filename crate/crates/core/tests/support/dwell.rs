//! Prefix-replay dwell oracle, stream generators and randomized property
//! checks shared by the dwell tests and the acceptance run.

use eyeguide_core::calib::GazeSample;
use eyeguide_core::dwell::{replay, ClickEvent, DwellClicker, DwellConfig, DwellState, Layout, TargetRegion};
use eyeguide_core::filter::{hold_through_blinks, FilterConfig};
use eyeguide_core::{Millis, Point, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FRAME_MS: Millis = 33;

pub fn rects() -> Vec<(&'static str, Rect)> {
    vec![
        ("a", Rect::new(0.0, 0.0, 120.0, 120.0)),
        ("b", Rect::new(200.0, 0.0, 120.0, 120.0)),
        ("c", Rect::new(0.0, 200.0, 320.0, 80.0)),
    ]
}

pub fn layout() -> Layout {
    Layout::new(rects().into_iter().map(|(id, r)| TargetRegion::new(id, r)).collect()).unwrap()
}

pub fn region_of(p: Point) -> Option<&'static str> {
    rects()
        .into_iter()
        .find(|(_, r)| p.x >= r.x && p.x < r.x + r.w && p.y >= r.y && p.y < r.y + r.h)
        .map(|(id, _)| id)
}

fn mean(ps: &[Point]) -> Point {
    let n = ps.len() as f64;
    Point::new(ps.iter().map(|p| p.x).sum::<f64>() / n, ps.iter().map(|p| p.y).sum::<f64>() / n)
}

/// Replays `prefix` from scratch and reports whether its last sample clicks.
pub fn oracle_last_click(prefix: &[GazeSample], cfg: &DwellConfig) -> Option<ClickEvent> {
    enum Mode {
        Idle,
        Hover { id: &'static str, start: Millis, members: Vec<Point> },
        Cool { id: &'static str, since: Millis },
    }
    let begin = |s: &GazeSample| match region_of(s.pos()) {
        Some(id) => Mode::Hover { id, start: s.timestamp, members: vec![s.pos()] },
        None => Mode::Idle,
    };
    let mut mode = Mode::Idle;
    let mut last = None;
    for s in prefix {
        last = None;
        if !s.valid {
            mode = Mode::Idle;
            continue;
        }
        let here = region_of(s.pos());
        mode = match mode {
            Mode::Idle => begin(s),
            Mode::Cool { id, since } if here == Some(id) && s.timestamp - since < cfg.refractory => Mode::Cool { id, since },
            Mode::Cool { .. } => begin(s),
            Mode::Hover { id, .. } if here != Some(id) => begin(s),
            Mode::Hover { id, start, mut members } => {
                if !s.held && s.pos().distance(mean(&members)) > cfg.jitter_radius {
                    begin(s)
                } else {
                    if !s.held {
                        members.push(s.pos());
                    }
                    if s.timestamp - start >= cfg.dwell_time {
                        last = Some(ClickEvent { target_id: id.into(), at: s.timestamp, gaze_anchor: mean(&members) });
                        Mode::Cool { id, since: s.timestamp }
                    } else {
                        Mode::Hover { id, start, members }
                    }
                }
            }
        };
    }
    last
}

pub fn oracle(samples: &[GazeSample], cfg: &DwellConfig) -> Vec<ClickEvent> {
    (1..=samples.len()).filter_map(|k| oracle_last_click(&samples[..k], cfg)).collect()
}

pub fn close(a: &[ClickEvent], b: &[ClickEvent]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.target_id == y.target_id && x.at == y.at && x.gaze_anchor.distance(y.gaze_anchor) < 1e-9
        })
}

/// One gaze segment of a scripted stream.
pub struct Segment {
    centre: Point,
    duration: Millis,
    jitter: f64,
}

pub fn random_point(rng: &mut ChaCha8Rng) -> Point {
    Point::new(rng.random_range(-20.0..340.0), rng.random_range(-20.0..300.0))
}

pub fn random_cfg(rng: &mut ChaCha8Rng) -> DwellConfig {
    DwellConfig {
        dwell_time: rng.random_range(300..=1500),
        jitter_radius: rng.random_range(10.0..60.0),
        refractory: rng.random_range(0..=800),
    }
}

/// Fixations with jitter, short and long invalid runs, and held runs.
pub fn random_stream(rng: &mut ChaCha8Rng) -> Vec<GazeSample> {
    let mut out = Vec::new();
    let mut t: Millis = 0;
    let mut last = Point::new(0.0, 0.0);
    while out.len() < 120 {
        match rng.random_range(0..10) {
            0 => {
                for _ in 0..rng.random_range(1..6) {
                    out.push(GazeSample::invalid(t));
                    t += FRAME_MS;
                }
            }
            1 => {
                for _ in 0..rng.random_range(1..6) {
                    out.push(GazeSample { held: true, ..GazeSample::valid(t, last.x, last.y) });
                    t += FRAME_MS;
                }
            }
            _ => {
                let seg = Segment {
                    centre: random_point(rng),
                    duration: rng.random_range(50..2500),
                    jitter: if rng.random_bool(0.7) { rng.random_range(0.0..8.0) } else { rng.random_range(0.0..80.0) },
                };
                let end = t + seg.duration;
                while t < end {
                    let p = Point::new(
                        seg.centre.x + rng.random_range(-1.0..=1.0) * seg.jitter,
                        seg.centre.y + rng.random_range(-1.0..=1.0) * seg.jitter,
                    );
                    out.push(GazeSample::valid(t, p.x, p.y));
                    last = p;
                    t += FRAME_MS;
                }
            }
        }
    }
    out
}


pub fn prefix_oracle_sweep(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD3E11);
    let layout = layout();
    let mut total = 0;
    for _ in 0..cases {
        let cfg = random_cfg(&mut rng);
        let s = random_stream(&mut rng);
        let got = replay(&s, &layout, &cfg);
        let want = oracle(&s, &cfg);
        assert!(close(&got, &want), "cfg {cfg:?}\nstream {s:?}\ngot {got:?}\nwant {want:?}");
        // causality: a prefix never sees a click the full stream lacks
        let k = rng.random_range(0..=s.len());
        let head = replay(&s[..k], &layout, &cfg);
        assert!(close(&head, &got[..head.len()]));
        total += got.len();
    }
    assert!(total > cases, "streams too tame: only {total} clicks");
}

pub fn one_click_per_episode(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE915);
    for _ in 0..cases {
        let cfg = random_cfg(&mut rng);
        let s = random_stream(&mut rng);
        let mut clicker = DwellClicker::new(layout(), cfg.clone()).unwrap();
        let mut in_episode = false;
        let mut clicks_in_episode = 0;
        let mut last_click: Option<ClickEvent> = None;
        for sample in &s {
            let before = clicker.state();
            let click = clicker.step(sample);
            let after = clicker.state();
            // a new hover episode begins whenever the hover start moves
            let restarted = match (before, after) {
                (DwellState::Hover { since: a, target: x, .. }, DwellState::Hover { since: b, target: y, .. }) => {
                    a != b || x != y
                }
                (_, DwellState::Hover { .. }) => true,
                _ => false,
            };
            if restarted {
                in_episode = true;
                clicks_in_episode = 0;
            }
            if let Some(c) = click {
                assert!(in_episode || matches!(before, DwellState::Hover { .. }));
                clicks_in_episode += 1;
                assert_eq!(clicks_in_episode, 1, "two clicks in one hover episode");
                assert_eq!(region_of(sample.pos()), Some(c.target_id.as_str()), "click outside its target");
                if let Some(prev) = &last_click {
                    if prev.target_id == c.target_id {
                        assert!(c.at - prev.at >= cfg.dwell_time, "{prev:?} then {c:?}");
                    }
                }
                last_click = Some(c);
                in_episode = false;
            }
        }
    }
}

pub fn steady_stays_click(cases: usize) {
    // any stay of at least dwell_time within jitter_radius/2 of a point inside
    // one region clicks at least once
    let mut rng = ChaCha8Rng::seed_from_u64(0x57EAD);
    let layout = layout();
    for _ in 0..cases {
        let cfg = random_cfg(&mut rng);
        let (_, r) = rects()[rng.random_range(0..3)];
        let margin = cfg.jitter_radius / 2.0;
        let c = Point::new(
            r.x + margin + rng.random::<f64>() * (r.w - 2.0 * margin).max(0.0),
            r.y + margin + rng.random::<f64>() * (r.h - 2.0 * margin).max(0.0),
        );
        // the stay spans (n - 1) frames
        let n = (cfg.dwell_time.div_ceil(FRAME_MS) + 1 + rng.random_range(0..30)) as usize;
        let mut s = vec![GazeSample::valid(0, -50.0, -50.0)];
        for i in 0..n {
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let rad = rng.random::<f64>() * margin;
            let p = Point::new(c.x + rad * ang.cos(), c.y + rad * ang.sin());
            let p = Point::new(p.x.clamp(r.x, r.x + r.w - 1e-6), p.y.clamp(r.y, r.y + r.h - 1e-6));
            s.push(GazeSample::valid(FRAME_MS * (i as Millis + 1), p.x, p.y));
        }
        let clicks = replay(&s, &layout, &cfg);
        assert!(!clicks.is_empty(), "cfg {cfg:?}, {n} samples around {c:?}");
    }
}

pub fn blink_splice_continuity(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB11C);
    let layout = layout();
    let fcfg = FilterConfig { blink_hold: 300, ..FilterConfig::default() };
    for _ in 0..cases {
        let cfg = DwellConfig { refractory: rng.random_range(200..=800), ..random_cfg(&mut rng) };
        // a hover that qualifies for exactly one click
        let (_, r) = rects()[rng.random_range(0..3)];
        let c = Point::new(r.x + r.w / 2.0, r.y + r.h / 2.0);
        let n = (cfg.dwell_time / FRAME_MS + 2 + rng.random_range(0..(cfg.refractory / FRAME_MS).max(1))) as usize;
        let mut raw = vec![GazeSample::valid(0, -50.0, -50.0)];
        for i in 0..n {
            let j = cfg.jitter_radius / 3.0;
            let p = Point::new(c.x + rng.random_range(-j..=j), c.y + rng.random_range(-j..=j));
            raw.push(GazeSample::valid(FRAME_MS * (i as Millis + 1), p.x, p.y));
        }
        raw.push(GazeSample::valid(FRAME_MS * (n as Millis + 1), -50.0, -50.0));
        let base = replay(&hold_through_blinks(&raw, &fcfg), &layout, &cfg);
        assert_eq!(base.len(), 1, "cfg {cfg:?} n {n}");

        // splice a blink shorter than blink_hold somewhere inside the hover
        let len = rng.random_range(1..=((fcfg.blink_hold - 1) / FRAME_MS) as usize - 1);
        let at = rng.random_range(2..raw.len() - 1 - len);
        let mut spliced = raw.clone();
        for s in &mut spliced[at..at + len] {
            *s = GazeSample::invalid(s.timestamp);
        }
        let held = hold_through_blinks(&spliced, &fcfg);
        assert!(held.iter().all(|s| s.valid), "blink of {len} frames was not held");
        let got = replay(&held, &layout, &cfg);
        assert_eq!(got.len(), 1, "blink at {at} len {len} changed the click count");
        assert_eq!(got[0].target_id, base[0].target_id);
    }
}

pub fn dwell_monotonicity(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3070);
    let layout = layout();
    for _ in 0..cases {
        let cfg = random_cfg(&mut rng);
        let s = random_stream(&mut rng);
        let shorter = DwellConfig { dwell_time: rng.random_range(300..=cfg.dwell_time), ..cfg.clone() };
        let long = replay(&s, &layout, &cfg).len();
        let short = replay(&s, &layout, &shorter).len();
        assert!(short >= long, "dwell {} gave {short}, dwell {} gave {long}", shorter.dwell_time, cfg.dwell_time);
    }
}

