use serde::{Deserialize, Serialize};

use crate::compute::{compute_power_check, ComputePowerCheck};
use crate::fuse::{bus_load, FuseError, FuseSetting, LoadModel};
use crate::model::PowerTopology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortBudget {
    pub port_id: String,
    /// Effective current limit (physical rating and budget).
    pub limit: f64,
    pub actuator_current: f64,
    pub compute_current: f64,
    pub peak_current: f64,
    pub peak_power: f64,
    pub within_limit: bool,
}

/// Static worst-case power report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub ports: Vec<PortBudget>,
    /// Physical capacity of every port that hosts an actuator bus, in watts.
    pub actuator_envelope_w: f64,
    /// Predicted actuator draw at the enforced torque registers, in watts.
    pub actuator_predicted_w: f64,
    pub compute_peak_w: f64,
    /// Actuator envelope plus compute peak.
    pub total_peak_w: f64,
    pub pdu_rating_w: f64,
    /// PDU rating left for compute once the actuator envelope is reserved.
    pub compute_headroom_w: f64,
    /// PDU rating left after actuators and compute.
    pub spare_w: f64,
    pub compute_checks: Vec<(String, ComputePowerCheck)>,
    pub violations: Vec<String>,
}

impl PowerBudget {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates every bus at its configured torque register (or the fuse cap,
/// when a fuse for that bus is supplied and is lower) together with peak
/// compute draw.
pub fn check_budget(
    topology: &PowerTopology,
    model: &LoadModel,
    fuses: &[FuseSetting],
) -> Result<PowerBudget, FuseError> {
    let mut violations = Vec::new();
    let mut ports = Vec::with_capacity(topology.ports.len());
    let mut actuator_envelope_w = 0.0;
    let mut actuator_predicted_w = 0.0;
    let mut compute_peak_w = 0.0;
    let mut compute_checks = Vec::new();

    for port in &topology.ports {
        let mut actuator_current = 0.0;
        let mut hosts_bus = false;
        for bus in topology.buses_on_port(&port.id) {
            hosts_bus = true;
            let tau =
                fuses.iter().find(|f| f.bus_id == bus.id).map_or(bus.torque_cap, |f| f.torque_cap.min(bus.torque_cap));
            actuator_current += bus_load(model, bus.active_count, tau, bus.accel_setting)
                .map_err(|e| FuseError::Bus { bus_id: bus.id.clone(), source: Box::new(e) })?;
        }
        if hosts_bus {
            actuator_envelope_w += port.physical_limit() * port.nominal_voltage;
        }
        actuator_predicted_w += actuator_current * port.nominal_voltage;

        let mut compute_current = 0.0;
        for c in topology.compute_on_port(&port.id) {
            let amps = c.peak_current(port.nominal_voltage);
            compute_current += amps;
            let watts = amps * port.nominal_voltage;
            compute_peak_w += watts;
            let check = compute_power_check(watts, port);
            if !check.fits {
                violations.push(format!(
                    "compute load {} draws {:.3} A on port {}, outside the compute envelope",
                    c.name, check.current, port.id
                ));
            }
            compute_checks.push((c.name.clone(), check));
        }

        let peak_current = actuator_current + compute_current;
        let limit = port.effective_limit();
        let within_limit = peak_current <= limit + 1e-9;
        if !within_limit {
            violations.push(format!("port {} peak {:.3} A exceeds limit {:.3} A", port.id, peak_current, limit));
        }
        ports.push(PortBudget {
            port_id: port.id.clone(),
            limit,
            actuator_current,
            compute_current,
            peak_current,
            peak_power: peak_current * port.nominal_voltage,
            within_limit,
        });
    }

    let total_peak_w = actuator_envelope_w + compute_peak_w;
    if total_peak_w > topology.pdu_power + 1e-9 {
        violations.push(format!("total peak {:.1} W exceeds PDU rating {:.1} W", total_peak_w, topology.pdu_power));
    }
    Ok(PowerBudget {
        ports,
        actuator_envelope_w,
        actuator_predicted_w,
        compute_peak_w,
        total_peak_w,
        pdu_rating_w: topology.pdu_power,
        compute_headroom_w: topology.pdu_power - actuator_envelope_w,
        spare_w: topology.pdu_power - total_peak_w,
        compute_checks,
        violations,
    })
}
