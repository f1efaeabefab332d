//! Camera-free gaze interaction pipeline.
//!
//! Data flows one way through the modules:
//!
//! ```text
//! sim ──EyeFrame──▶ pupil ──PupilObservation──▶ calib ──GazeSample──▶ filter ──▶ dwell ──ClickEvent──▶ messenger
//! ```
//!
//! [`harness`] wires the stages into a closed loop driven by a simulated user,
//! and [`protocol`] describes the messages pushed to the companion UI.

pub mod calib;
pub mod config;
pub mod dwell;
pub mod filter;
pub mod geom;
pub mod harness;
pub mod io;
pub mod messenger;
pub mod protocol;
pub mod pupil;
pub mod sim;

pub use geom::{Millis, Point, Rect, ScreenSize};
