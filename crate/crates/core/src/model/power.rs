use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ActuatorSpec, ValidationError, TORQUE_REGISTER_MAX};

/// One current-limited output of the power distribution unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PduPort {
    pub id: String,
    /// Amperes the port can physically deliver.
    pub rated_current: f64,
    /// Watts the port can physically deliver.
    pub rated_power: f64,
    pub nominal_voltage: f64,
    /// Seconds of continuous overcurrent before the port shuts down.
    #[serde(default = "default_trip_delay")]
    pub trip_delay: f64,
    /// Ohms of source resistance used by the droop model.
    #[serde(default = "default_internal_resistance")]
    pub internal_resistance: f64,
    /// Optional current budget assigned to the port by the firmware design,
    /// tighter than the physical rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_current: Option<f64>,
}

pub const DEFAULT_TRIP_DELAY: f64 = 0.05;
pub const DEFAULT_INTERNAL_RESISTANCE: f64 = 0.01;

fn default_trip_delay() -> f64 {
    DEFAULT_TRIP_DELAY
}

fn default_internal_resistance() -> f64 {
    DEFAULT_INTERNAL_RESISTANCE
}

impl PduPort {
    /// Binding physical limit: rated current or rated power at nominal voltage.
    pub fn physical_limit(&self) -> f64 {
        self.rated_current.min(self.rated_power / self.nominal_voltage)
    }

    /// Physical limit further restricted by the configured budget.
    pub fn effective_limit(&self) -> f64 {
        match self.budget_current {
            Some(b) => self.physical_limit().min(b),
            None => self.physical_limit(),
        }
    }

    pub fn voltage_at(&self, current: f64) -> f64 {
        self.nominal_voltage - self.internal_resistance * current
    }
}

/// A group of actuators sharing one port, with its firmware settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusConfig {
    pub id: String,
    pub port_id: String,
    pub actuator_ids: Vec<String>,
    /// Worst-case number of concurrently loaded actuators.
    pub active_count: u32,
    /// Configured torque-limit register applied to every servo on the bus.
    pub torque_cap: u32,
    /// Acceleration register applied to every servo on the bus.
    pub accel_setting: u32,
}

/// A non-actuator consumer (the onboard computer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeLoad {
    pub name: String,
    /// Amperes drawn at idle.
    pub steady_current: f64,
    pub port_id: String,
    /// Watts under peak inference load, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_watts: Option<f64>,
}

impl ComputeLoad {
    pub fn peak_current(&self, voltage: f64) -> f64 {
        match self.peak_watts {
            Some(w) => (w / voltage).max(self.steady_current),
            None => self.steady_current,
        }
    }
}

/// Ports, buses, and compute consumers wired together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTopology {
    pub actuators: Vec<ActuatorSpec>,
    pub ports: Vec<PduPort>,
    pub buses: Vec<BusConfig>,
    pub compute_loads: Vec<ComputeLoad>,
    /// Watt-hours.
    pub battery_capacity: f64,
    /// Total PDU output rating in watts.
    pub pdu_power: f64,
}

impl PowerTopology {
    pub fn port(&self, id: &str) -> Option<&PduPort> {
        self.ports.iter().find(|p| p.id == id)
    }

    pub fn bus(&self, id: &str) -> Option<&BusConfig> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn actuator(&self, id: &str) -> Option<&ActuatorSpec> {
        self.actuators.iter().find(|a| a.id == id)
    }

    pub fn port_index(&self, id: &str) -> Option<usize> {
        self.ports.iter().position(|p| p.id == id)
    }

    pub fn buses_on_port<'a>(&'a self, port_id: &'a str) -> impl Iterator<Item = &'a BusConfig> {
        self.buses.iter().filter(move |b| b.port_id == port_id)
    }

    pub fn compute_on_port<'a>(&'a self, port_id: &'a str) -> impl Iterator<Item = &'a ComputeLoad> {
        self.compute_loads.iter().filter(move |c| c.port_id == port_id)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut seen = BTreeSet::new();
        for (i, a) in self.actuators.iter().enumerate() {
            if !seen.insert(a.id.as_str()) {
                return Err(ValidationError::new(
                    format!("actuators[{i}].id"),
                    format!("duplicate actuator id \"{}\"", a.id),
                ));
            }
            a.validate(&format!("actuators[{i}]"))?;
        }

        let mut port_ids = BTreeSet::new();
        for (i, p) in self.ports.iter().enumerate() {
            let f = |sub: &str| format!("ports[{i}].{sub}");
            if !port_ids.insert(p.id.as_str()) {
                return Err(ValidationError::new(f("id"), format!("duplicate port id \"{}\"", p.id)));
            }
            for (name, v) in [
                ("rated_current", p.rated_current),
                ("rated_power", p.rated_power),
                ("nominal_voltage", p.nominal_voltage),
            ] {
                if !(v > 0.0) {
                    return Err(ValidationError::new(f(name), format!("must be > 0, got {v}")));
                }
            }
            if !(p.internal_resistance >= 0.0) {
                return Err(ValidationError::new(
                    f("internal_resistance"),
                    format!("must be >= 0, got {}", p.internal_resistance),
                ));
            }
            if !(p.trip_delay >= 0.0) {
                return Err(ValidationError::new(f("trip_delay"), format!("must be >= 0, got {}", p.trip_delay)));
            }
            if let Some(b) = p.budget_current {
                if !(b > 0.0) {
                    return Err(ValidationError::new(f("budget_current"), format!("must be > 0, got {b}")));
                }
            }
        }

        let mut bus_ids = BTreeSet::new();
        let mut assigned: BTreeSet<&str> = BTreeSet::new();
        for (i, b) in self.buses.iter().enumerate() {
            let f = |sub: &str| format!("buses[{i}].{sub}");
            if !bus_ids.insert(b.id.as_str()) {
                return Err(ValidationError::new(f("id"), format!("duplicate bus id \"{}\"", b.id)));
            }
            if !port_ids.contains(b.port_id.as_str()) {
                return Err(ValidationError::new(f("port_id"), format!("unknown port \"{}\"", b.port_id)));
            }
            for id in &b.actuator_ids {
                if !seen.contains(id.as_str()) {
                    return Err(ValidationError::new(f("actuator_ids"), format!("unknown actuator \"{id}\"")));
                }
                if !assigned.insert(id.as_str()) {
                    return Err(ValidationError::new(
                        f("actuator_ids"),
                        format!("actuator \"{id}\" appears on more than one bus"),
                    ));
                }
            }
            if b.active_count < 1 || b.active_count as usize > b.actuator_ids.len() {
                return Err(ValidationError::new(
                    f("active_count"),
                    format!("must be in 1..={}, got {}", b.actuator_ids.len(), b.active_count),
                ));
            }
            if b.torque_cap > TORQUE_REGISTER_MAX {
                return Err(ValidationError::new(
                    f("torque_cap"),
                    format!("must be in 0..={TORQUE_REGISTER_MAX}, got {}", b.torque_cap),
                ));
            }
        }

        for (i, c) in self.compute_loads.iter().enumerate() {
            let f = |sub: &str| format!("compute_loads[{i}].{sub}");
            if !port_ids.contains(c.port_id.as_str()) {
                return Err(ValidationError::new(f("port_id"), format!("unknown port \"{}\"", c.port_id)));
            }
            if !(c.steady_current >= 0.0) {
                return Err(ValidationError::new(
                    f("steady_current"),
                    format!("must be >= 0, got {}", c.steady_current),
                ));
            }
            if let Some(w) = c.peak_watts {
                if !(w >= 0.0) {
                    return Err(ValidationError::new(f("peak_watts"), format!("must be >= 0, got {w}")));
                }
            }
        }

        if !(self.battery_capacity > 0.0) {
            return Err(ValidationError::new("battery_wh", format!("must be > 0, got {}", self.battery_capacity)));
        }
        if !(self.pdu_power > 0.0) {
            return Err(ValidationError::new("pdu_power_w", format!("must be > 0, got {}", self.pdu_power)));
        }
        Ok(())
    }
}
