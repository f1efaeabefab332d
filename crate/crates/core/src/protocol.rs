//! Messages exchanged with the companion UI.
//!
//! Each message is one JSON object terminated by `\n`, carried in one
//! WebSocket text frame. Server messages are tagged by `type`:
//!
//! | type         | payload                                   |
//! |--------------|-------------------------------------------|
//! | `layout`     | `layout` (MessengerLayout), `dwell` (DwellConfig) |
//! | `state_sync` | `state` (MessengerState)                  |
//! | `cursor`     | `t` (ms), `x`, `y`, `valid`               |
//! | `speak`      | `text`                                    |
//! | `alarm_on`   | none                                      |
//! | `alarm_off`  | none                                      |
//!
//! The only client message is `pointer_override` with `x`, `y` in screen
//! pixels, a mouse fallback for demos that stands in for gaze samples.

use serde::{Deserialize, Serialize};

use crate::dwell::DwellConfig;
use crate::geom::{Millis, Point};
use crate::messenger::{MessengerLayout, MessengerState, OutboundEvent};

/// Upper bound on cursor messages per second.
pub const MAX_CURSOR_RATE: u64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Layout { layout: MessengerLayout, dwell: DwellConfig },
    StateSync { state: MessengerState },
    Cursor { t: Millis, x: f64, y: f64, valid: bool },
    Speak { text: String },
    AlarmOn,
    AlarmOff,
}

impl From<OutboundEvent> for ServerMessage {
    fn from(e: OutboundEvent) -> Self {
        match e {
            OutboundEvent::Speak { text } => Self::Speak { text },
            OutboundEvent::AlarmOn => Self::AlarmOn,
            OutboundEvent::AlarmOff => Self::AlarmOff,
            OutboundEvent::StateSync { state } => Self::StateSync { state },
            OutboundEvent::Cursor { t, x, y, valid } => Self::Cursor { t, x, y, valid },
        }
    }
}

impl ServerMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Layout { .. } => "layout",
            Self::StateSync { .. } => "state_sync",
            Self::Cursor { .. } => "cursor",
            Self::Speak { .. } => "speak",
            Self::AlarmOn => "alarm_on",
            Self::AlarmOff => "alarm_off",
        }
    }

    /// One wire line, newline-terminated.
    pub fn encode(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages always serialize");
        s.push('\n');
        s
    }

    pub fn decode(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    PointerOverride { x: f64, y: f64 },
}

impl ClientMessage {
    pub fn encode(&self) -> String {
        let mut s = serde_json::to_string(self).expect("client messages always serialize");
        s.push('\n');
        s
    }

    pub fn decode(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim_end())
    }

    pub fn point(&self) -> Point {
        match *self {
            Self::PointerOverride { x, y } => Point::new(x, y),
        }
    }
}

/// Per-connection view of the outbound stream: handshake plus cursor
/// throttling. Non-cursor messages always pass, in order.
#[derive(Debug, Clone, Default)]
pub struct UiSession {
    last_cursor: Option<Millis>,
}

impl UiSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Messages sent on connect: the full layout, then the current state.
    pub fn handshake(&mut self, layout: &MessengerLayout, dwell: &DwellConfig, state: &MessengerState) -> Vec<ServerMessage> {
        self.last_cursor = None;
        vec![
            ServerMessage::Layout { layout: layout.clone(), dwell: dwell.clone() },
            ServerMessage::StateSync { state: state.clone() },
        ]
    }

    /// Returns the message to send, or `None` when a cursor update arrives
    /// sooner than 1/60 s after the last one sent.
    pub fn forward(&mut self, msg: ServerMessage) -> Option<ServerMessage> {
        if let ServerMessage::Cursor { t, .. } = msg {
            if let Some(last) = self.last_cursor {
                if t < last || (t - last) * MAX_CURSOR_RATE < 1000 {
                    return None;
                }
            }
            self.last_cursor = Some(t);
        }
        Some(msg)
    }
}
