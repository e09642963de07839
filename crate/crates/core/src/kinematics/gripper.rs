use serde::{Deserialize, Serialize};

use super::KinematicsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    /// Seconds from the first command.
    pub t: f64,
    /// Radians.
    pub position: f64,
}

/// Position commands from `start` to `end` in increments of at most `step`,
/// one every `dwell` seconds. The last command always lands on `end`.
pub fn gripper_close(start: f64, end: f64, step: f64, dwell: f64) -> Result<Vec<TimedCommand>, KinematicsError> {
    if !(step > 0.0) {
        return Err(KinematicsError::NonPositiveStep(step));
    }
    let span = end - start;
    let n = ((span.abs() / step) - 1e-9).ceil().max(0.0) as usize;
    let dir = span.signum();
    Ok((0..=n)
        .map(|k| TimedCommand {
            t: k as f64 * dwell,
            position: if k == n { end } else { start + dir * step * k as f64 },
        })
        .collect())
}
