//! Trial statistics.

use super::HarnessError;

/// Arithmetic mean rounded half-up to two decimals.
///
/// The mean is nudged by a tiny epsilon before rounding so that values such
/// as 2.205, which binary floating point stores as 2.2049999..., round up.
pub fn average_trials(times: &[f64]) -> Result<f64, HarnessError> {
    if times.is_empty() {
        return Err(HarnessError::InsufficientData("no trial times to average".into()));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(HarnessError::InsufficientData(format!("non-finite trial time {t}")));
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    Ok(round_half_up(mean, 2))
}

pub fn round_half_up(v: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = v * scale;
    (scaled + 0.5 + 1e-9 * scaled.abs().max(1.0)).floor() / scale
}
