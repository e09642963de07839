use serde::{Deserialize, Serialize};

use super::ValidationError;

/// Full-scale value of the servo torque-limit register.
pub const TORQUE_REGISTER_MAX: u32 = 1000;

/// Register/torque pairs printed alongside the firmware saturation table
/// (`tau = 450 ~ 1.32 N·m`, `tau = 650 ~ 1.91 N·m`).
pub const TORQUE_ANCHORS: [(u32, f64); 2] = [(450, 1.32), (650, 1.91)];

/// Electrical and torque characteristics of one serial-bus servo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSpec {
    pub id: String,
    /// Amperes at full torque register.
    pub stall_current: f64,
    /// Amperes with no load.
    pub no_load_current: f64,
    /// Amperes per 1000 torque-register units.
    pub current_slope: f64,
    #[serde(default = "default_register_max")]
    pub torque_register_max: u32,
    /// Newton-meters per register unit.
    #[serde(default = "fitted_torque_per_register")]
    pub torque_per_register: f64,
    #[serde(default = "default_supply_voltage")]
    pub supply_voltage: f64,
}

fn default_register_max() -> u32 {
    TORQUE_REGISTER_MAX
}

fn default_supply_voltage() -> f64 {
    12.0
}

fn fitted_torque_per_register() -> f64 {
    fit_torque_per_register(&TORQUE_ANCHORS)
}

impl ActuatorSpec {
    /// STS3215-class servo at 12 V with the torque slope fitted to
    /// [`TORQUE_ANCHORS`].
    pub fn sts3215(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            stall_current: 2.7,
            no_load_current: 0.18,
            current_slope: 2.52,
            torque_register_max: TORQUE_REGISTER_MAX,
            torque_per_register: fitted_torque_per_register(),
            supply_voltage: 12.0,
        }
    }

    /// Converts a torque-limit register value to newton-meters.
    pub fn register_to_torque(&self, tau: u32) -> Result<f64, RegisterOutOfRange> {
        if tau > self.torque_register_max {
            return Err(RegisterOutOfRange { value: tau, max: self.torque_register_max });
        }
        Ok(f64::from(tau) * self.torque_per_register)
    }

    /// Torque at the full-scale register value.
    pub fn stall_torque(&self) -> f64 {
        f64::from(self.torque_register_max) * self.torque_per_register
    }

    pub(crate) fn validate(&self, field: &str) -> Result<(), ValidationError> {
        let err = |sub: &str, msg: String| Err(ValidationError::new(format!("{field}.{sub}"), msg));
        if !(self.no_load_current > 0.0) {
            return err("no_load_current", format!("must be > 0, got {}", self.no_load_current));
        }
        if !(self.stall_current > self.no_load_current) {
            return err(
                "stall_current",
                format!("must exceed no_load_current ({}), got {}", self.no_load_current, self.stall_current),
            );
        }
        if !(self.current_slope > 0.0) {
            return err("current_slope", format!("must be > 0, got {}", self.current_slope));
        }
        if self.torque_register_max != TORQUE_REGISTER_MAX {
            return err(
                "torque_register_max",
                format!("must be {TORQUE_REGISTER_MAX}, got {}", self.torque_register_max),
            );
        }
        if !(self.torque_per_register > 0.0) {
            return err("torque_per_register", format!("must be > 0, got {}", self.torque_per_register));
        }
        if !(self.supply_voltage > 0.0) {
            return err("supply_voltage", format!("must be > 0, got {}", self.supply_voltage));
        }
        // The static current model runs from no-load at tau = 0 to stall at full scale.
        let endpoint = self.no_load_current + self.current_slope;
        if ((endpoint - self.stall_current) / self.stall_current).abs() > 0.02 {
            return err(
                "current_slope",
                format!(
                    "no_load_current + current_slope = {endpoint:.4} A deviates from stall_current {} A by more than 2%",
                    self.stall_current
                ),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("torque register {value} outside 0..={max}")]
pub struct RegisterOutOfRange {
    pub value: u32,
    pub max: u32,
}

/// Least-squares slope through the origin for (register, N·m) pairs.
pub fn fit_torque_per_register(anchors: &[(u32, f64)]) -> f64 {
    let (num, den) = anchors.iter().fold((0.0, 0.0), |(n, d), &(reg, nm)| {
        let r = f64::from(reg);
        (n + r * nm, d + r * r)
    });
    num / den
}
