//! Oracles shared between test targets; each target uses a subset.
#![allow(dead_code)]

pub mod dwell;
pub mod fixation;
