//! Shared domain entities: actuators, the PDU/bus topology, kinematic chains,
//! and the scenario config file that ties them together.

mod actuator;
mod chain;
mod config;
mod power;

pub use actuator::{fit_torque_per_register, ActuatorSpec, RegisterOutOfRange, TORQUE_ANCHORS, TORQUE_REGISTER_MAX};
pub use chain::{Joint, JointKind, KinematicChain, Transform, LIMIT_EPS};
pub use config::{key_path, load_config, load_topology, parse_config, CameraConfig, Config, ConfigError};
pub use power::{BusConfig, ComputeLoad, PduPort, PowerTopology, DEFAULT_INTERNAL_RESISTANCE, DEFAULT_TRIP_DELAY};

/// An invariant violated by a loaded value, tagged with the offending field path.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}
