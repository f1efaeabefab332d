//! The assistive messenger: ten spoken command templates in a right-hand
//! column, an on-screen keyboard for free text, a speak button and a latched
//! alarm. Clicks come exclusively from the dwell clicker.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dwell::{DwellError, Layout, TargetRegion};
use crate::geom::{Millis, Rect, ScreenSize};

pub const TEMPLATE_COUNT: usize = 10;
pub const MAX_TEXT_LEN: usize = 500;

pub const SPEAK_ID: &str = "speak";
pub const ALARM_ID: &str = "alarm";
pub const SPACE_ID: &str = "key:SPACE";
pub const BACKSPACE_ID: &str = "key:BACKSPACE";
pub const CLEAR_ID: &str = "key:CLEAR";

const KEY_ROWS: [&str; 3] = ["QWERTYUIOP", "ASDFGHJKL", "ZXCVBNM"];

/// Shipped template fixture; any ten phrases may replace it.
pub const DEFAULT_TEMPLATES: [&str; TEMPLATE_COUNT] = [
    "I need help",
    "I am hungry",
    "I am thirsty",
    "I need the bathroom",
    "I am in pain",
    "Please call the nurse",
    "Please call my family",
    "I am cold",
    "I am hot",
    "Thank you",
];

#[derive(Debug, Error, PartialEq)]
pub enum MessengerError {
    #[error("the messenger needs exactly {TEMPLATE_COUNT} templates, got {0}")]
    TemplateCount(usize),
    #[error("region {0:?} lies outside the screen")]
    OffScreen(String),
    #[error("unknown target {0:?}")]
    UnknownTarget(String),
    #[error("template {0} is empty")]
    EmptyTemplate(usize),
    #[error(transparent)]
    Layout(#[from] DwellError),
    #[error("templates file: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateButton {
    pub id: String,
    pub text: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyButton {
    pub id: String,
    pub label: String,
    pub rect: Rect,
}

/// Geometry and content of the messenger screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessengerLayout {
    pub screen_size: ScreenSize,
    pub templates: Vec<TemplateButton>,
    pub keyboard: Vec<KeyButton>,
    pub speak_button: Rect,
    pub alarm_button: Rect,
}

/// Templates file: `{"templates": ["...", ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesFile {
    pub templates: Vec<String>,
}

pub fn load_templates(path: &Path) -> Result<Vec<String>, MessengerError> {
    let text = std::fs::read_to_string(path).map_err(|e| MessengerError::File(e.to_string()))?;
    let f: TemplatesFile = serde_json::from_str(&text).map_err(|e| MessengerError::File(e.to_string()))?;
    if f.templates.len() != TEMPLATE_COUNT {
        return Err(MessengerError::TemplateCount(f.templates.len()));
    }
    Ok(f.templates)
}

pub fn template_id(i: usize) -> String {
    format!("template-{}", i + 1)
}

impl MessengerLayout {
    /// Standard arrangement: composed-text strip across the top, keyboard on
    /// the left, speak and alarm below it, templates in a right-hand column.
    pub fn generate(screen: ScreenSize, templates: &[String]) -> Result<Self, MessengerError> {
        if templates.len() != TEMPLATE_COUNT {
            return Err(MessengerError::TemplateCount(templates.len()));
        }
        let (w, h) = (screen.w as f64, screen.h as f64);
        let margin = w * 0.01;

        let col_x = w * 0.72;
        let col_w = w - col_x - margin;
        let col_top = h * 0.02;
        let slot = (h - 2.0 * col_top) / TEMPLATE_COUNT as f64;
        let templates = templates
            .iter()
            .enumerate()
            .map(|(i, text)| TemplateButton {
                id: template_id(i),
                text: text.clone(),
                rect: Rect::new(col_x, col_top + i as f64 * slot + slot * 0.05, col_w, slot * 0.9),
            })
            .collect();

        let kb_x = margin;
        let kb_w = col_x - 2.0 * margin;
        let kb_top = h * 0.22;
        let row_h = h * 0.13;
        let key_w = kb_w / 10.0;
        let pad = key_w * 0.06;
        let mut keyboard = Vec::new();
        for (r, row) in KEY_ROWS.iter().enumerate() {
            let indent = r as f64 * key_w * 0.5;
            for (c, ch) in row.chars().enumerate() {
                keyboard.push(KeyButton {
                    id: format!("key:{ch}"),
                    label: ch.to_string(),
                    rect: Rect::new(
                        kb_x + indent + c as f64 * key_w + pad,
                        kb_top + r as f64 * row_h + pad,
                        key_w - 2.0 * pad,
                        row_h - 2.0 * pad,
                    ),
                });
            }
        }
        let bottom = kb_top + 3.0 * row_h;
        let wide = |x0: f64, span: f64| Rect::new(kb_x + x0 * key_w + pad, bottom + pad, span * key_w - 2.0 * pad, row_h - 2.0 * pad);
        keyboard.push(KeyButton { id: SPACE_ID.into(), label: "SPACE".into(), rect: wide(0.0, 5.0) });
        keyboard.push(KeyButton { id: BACKSPACE_ID.into(), label: "\u{232b}".into(), rect: wide(5.0, 2.5) });
        keyboard.push(KeyButton { id: CLEAR_ID.into(), label: "CLEAR".into(), rect: wide(7.5, 2.5) });

        let action_top = bottom + row_h;
        let speak_button = Rect::new(kb_x + pad, action_top + pad, kb_w / 2.0 - 2.0 * pad, row_h - 2.0 * pad);
        let alarm_button = Rect::new(kb_x + kb_w / 2.0 + pad, action_top + pad, kb_w / 2.0 - 2.0 * pad, row_h - 2.0 * pad);

        let layout = Self { screen_size: screen, templates, keyboard, speak_button, alarm_button };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<(), MessengerError> {
        if self.templates.len() != TEMPLATE_COUNT {
            return Err(MessengerError::TemplateCount(self.templates.len()));
        }
        if let Some(i) = self.templates.iter().position(|t| t.text.trim().is_empty()) {
            return Err(MessengerError::EmptyTemplate(i));
        }
        let regions = self.regions();
        if let Some(r) = regions.iter().find(|r| !r.rect.inside(self.screen_size)) {
            return Err(MessengerError::OffScreen(r.id.clone()));
        }
        Layout::new(regions)?;
        Ok(())
    }

    /// Every clickable region, as the dwell clicker sees them.
    pub fn regions(&self) -> Vec<TargetRegion> {
        let mut v: Vec<TargetRegion> = self.templates.iter().map(|t| TargetRegion::new(&t.id, t.rect)).collect();
        v.extend(self.keyboard.iter().map(|k| TargetRegion::new(&k.id, k.rect)));
        v.push(TargetRegion::new(SPEAK_ID, self.speak_button));
        v.push(TargetRegion::new(ALARM_ID, self.alarm_button));
        v
    }

    pub fn dwell_layout(&self) -> Layout {
        Layout::new(self.regions()).expect("validated at construction")
    }

    fn action(&self, target_id: &str) -> Option<Action> {
        if let Some(t) = self.templates.iter().find(|t| t.id == target_id) {
            return Some(Action::Template(t.text.clone()));
        }
        match target_id {
            SPEAK_ID => Some(Action::Speak),
            ALARM_ID => Some(Action::Alarm),
            SPACE_ID => Some(Action::Type(' ')),
            BACKSPACE_ID => Some(Action::Backspace),
            CLEAR_ID => Some(Action::Clear),
            _ => {
                let k = self.keyboard.iter().find(|k| k.id == target_id)?;
                k.label.chars().next().map(Action::Type)
            }
        }
    }
}

enum Action {
    Template(String),
    Type(char),
    Backspace,
    Clear,
    Speak,
    Alarm,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MessengerState {
    pub composed_text: String,
    pub alarm_active: bool,
    pub last_spoken: Option<String>,
    pub revision: u64,
}

/// Events for the UI and the speech sink, in emission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutboundEvent {
    Speak { text: String },
    AlarmOn,
    AlarmOff,
    StateSync { state: MessengerState },
    Cursor { t: Millis, x: f64, y: f64, valid: bool },
}

/// Applies one click. Every call bumps the revision and ends with a state sync.
pub fn apply_click(
    layout: &MessengerLayout,
    state: &MessengerState,
    target_id: &str,
) -> Result<(MessengerState, Vec<OutboundEvent>), MessengerError> {
    let action = layout.action(target_id).ok_or_else(|| MessengerError::UnknownTarget(target_id.to_owned()))?;
    let mut next = state.clone();
    next.revision += 1;
    let mut events = Vec::new();
    match action {
        Action::Template(text) => events.push(OutboundEvent::Speak { text }),
        Action::Type(c) => {
            if next.composed_text.chars().count() < MAX_TEXT_LEN {
                next.composed_text.push(c);
            }
        }
        Action::Backspace => {
            next.composed_text.pop();
        }
        Action::Clear => next.composed_text.clear(),
        Action::Speak => {
            if !next.composed_text.is_empty() {
                next.last_spoken = Some(next.composed_text.clone());
                events.push(OutboundEvent::Speak { text: next.composed_text.clone() });
            }
        }
        Action::Alarm => {
            next.alarm_active = !next.alarm_active;
            events.push(if next.alarm_active { OutboundEvent::AlarmOn } else { OutboundEvent::AlarmOff });
        }
    }
    events.push(OutboundEvent::StateSync { state: next.clone() });
    Ok((next, events))
}

/// Layout plus current state; the single owner of messenger mutations.
#[derive(Debug, Clone)]
pub struct Messenger {
    layout: MessengerLayout,
    state: MessengerState,
}

impl Messenger {
    pub fn new(layout: MessengerLayout) -> Self {
        Self { layout, state: MessengerState::default() }
    }

    pub fn layout(&self) -> &MessengerLayout {
        &self.layout
    }

    pub fn state(&self) -> &MessengerState {
        &self.state
    }

    pub fn click(&mut self, target_id: &str) -> Result<Vec<OutboundEvent>, MessengerError> {
        let (next, events) = apply_click(&self.layout, &self.state, target_id)?;
        self.state = next;
        Ok(events)
    }
}

// ── speech output ───────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SpeakStatus {
    /// Null sink: nothing was run.
    Recorded,
    Exited { code: Option<i32> },
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub text: String,
    #[serde(flatten)]
    pub status: SpeakStatus,
}

/// Receives text to be spoken by something outside this process.
pub trait SpeechSink {
    fn speak(&mut self, text: &str) -> Invocation;
    fn log(&self) -> &[Invocation];
}

#[derive(Debug, Default, Clone)]
pub struct NullSink {
    log: Vec<Invocation>,
}

impl SpeechSink for NullSink {
    fn speak(&mut self, text: &str) -> Invocation {
        let inv = Invocation { text: text.to_owned(), status: SpeakStatus::Recorded };
        self.log.push(inv.clone());
        inv
    }

    fn log(&self) -> &[Invocation] {
        &self.log
    }
}

/// Runs `program args... <text>` and waits for it.
#[derive(Debug, Clone)]
pub struct CommandSink {
    program: String,
    args: Vec<String>,
    log: Vec<Invocation>,
}

impl CommandSink {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self { program: program.into(), args, log: Vec::new() }
    }

    /// Splits a command line with POSIX shell quoting; the first word is the
    /// program. `None` for an empty line or unbalanced quotes.
    pub fn from_command_line(line: &str) -> Option<Self> {
        let mut words = shlex::split(line)?.into_iter();
        let program = words.next()?;
        Some(Self::new(program, words.collect()))
    }
}

impl SpeechSink for CommandSink {
    fn speak(&mut self, text: &str) -> Invocation {
        let status = match Command::new(&self.program).args(&self.args).arg(text).status() {
            Ok(st) => SpeakStatus::Exited { code: st.code() },
            Err(e) => {
                log::warn!("speaker unavailable ({}): {e}", self.program);
                SpeakStatus::Unavailable { reason: e.to_string() }
            }
        };
        let inv = Invocation { text: text.to_owned(), status };
        self.log.push(inv.clone());
        inv
    }

    fn log(&self) -> &[Invocation] {
        &self.log
    }
}

/// Sends every speak event in `events` to `sink`, in order.
pub fn speak_events(sink: &mut dyn SpeechSink, events: &[OutboundEvent]) -> Vec<Invocation> {
    events
        .iter()
        .filter_map(|e| match e {
            OutboundEvent::Speak { text } => Some(sink.speak(text)),
            _ => None,
        })
        .collect()
}
