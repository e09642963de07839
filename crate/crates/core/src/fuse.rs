//! Bus current model and its inversion into firmware torque caps.
//!
//! A bus of `n` identical servos is modeled as drawing, in the worst case,
//!
//! ```text
//! I(tau, alpha) = n * (slope * tau / 1000 + no_load + D(alpha))
//! ```
//!
//! where `D(alpha)` is an acceleration-dependent inrush term calibrated from
//! observed bus loads. Solving for `tau` against a port limit gives the largest
//! torque register that keeps the bus under that limit: the "virtual fuse".

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{PowerTopology, ValidationError, TORQUE_REGISTER_MAX};

/// Slack for floating-point comparisons against port limits.
const CURRENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FuseError {
    #[error("no inrush entry for accel register {0}")]
    UnknownAccel(u32),
    #[error("torque register {0} outside 0..=1000")]
    TorqueOutOfRange(u32),
    #[error("active actuator count must be >= 1")]
    NoActiveActuators,
    #[error("infeasible: even zero torque draws {min_load:.4} A against a {port_limit:.4} A limit")]
    Infeasible { min_load: f64, port_limit: f64 },
    #[error("bus {bus_id}: {source}")]
    Bus {
        bus_id: String,
        #[source]
        source: Box<FuseError>,
    },
    #[error("calibration row for accel {alpha} solves to negative inrush {value:.6} A")]
    NegativeInrush { alpha: u32, value: f64 },
    #[error("duplicate calibration row for accel register {0}")]
    DuplicateAccel(u32),
}

/// Parameters of the bus current model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    /// Amperes per servo at zero torque.
    pub no_load_current: f64,
    /// Amperes per servo across the full register range.
    pub current_slope: f64,
    /// Inrush `D(alpha)` in amperes per servo, keyed by accel register.
    pub inrush_table: BTreeMap<u32, f64>,
    /// Linearly interpolate between table entries instead of rejecting unknown registers.
    #[serde(default)]
    pub interpolate: bool,
}

impl LoadModel {
    pub fn new(no_load_current: f64, current_slope: f64, inrush_table: BTreeMap<u32, f64>) -> Self {
        Self { no_load_current, current_slope, inrush_table, interpolate: false }
    }

    pub fn inrush(&self, alpha: u32) -> Result<f64, FuseError> {
        if let Some(&d) = self.inrush_table.get(&alpha) {
            return Ok(d);
        }
        if self.interpolate {
            let below = self.inrush_table.range(..alpha).next_back();
            let above = self.inrush_table.range(alpha..).next();
            if let (Some((&a0, &d0)), Some((&a1, &d1))) = (below, above) {
                let w = f64::from(alpha - a0) / f64::from(a1 - a0);
                return Ok(d0 + w * (d1 - d0));
            }
        }
        Err(FuseError::UnknownAccel(alpha))
    }

    /// Per-servo current at a torque register and inrush value.
    fn per_servo(&self, tau: u32, inrush: f64) -> f64 {
        self.current_slope * f64::from(tau) / 1000.0 + self.no_load_current + inrush
    }
}

/// Worst-case bus current for `n_active` servos at torque register `tau`
/// and acceleration register `alpha`.
pub fn bus_load(model: &LoadModel, n_active: u32, tau: u32, alpha: u32) -> Result<f64, FuseError> {
    if n_active == 0 {
        return Err(FuseError::NoActiveActuators);
    }
    if tau > TORQUE_REGISTER_MAX {
        return Err(FuseError::TorqueOutOfRange(tau));
    }
    let d = model.inrush(alpha)?;
    Ok(f64::from(n_active) * model.per_servo(tau, d))
}

/// Largest torque register whose bus load stays within `port_limit`.
pub fn max_torque(model: &LoadModel, port_limit: f64, n_active: u32, alpha: u32) -> Result<u32, FuseError> {
    if n_active == 0 {
        return Err(FuseError::NoActiveActuators);
    }
    let d = model.inrush(alpha)?;
    let n = f64::from(n_active);
    let min_load = n * (model.no_load_current + d);
    if min_load > port_limit + CURRENT_EPS {
        return Err(FuseError::Infeasible { min_load, port_limit });
    }
    let exact = (port_limit / n - model.no_load_current - d) / model.current_slope * 1000.0;
    // Nudge past representation error so exact integers are not floored down,
    // then step back if that overshoots the limit.
    let mut cap = (exact + 1e-9).floor().clamp(0.0, f64::from(TORQUE_REGISTER_MAX)) as u32;
    while cap > 0 && n * model.per_servo(cap, d) > port_limit + CURRENT_EPS {
        cap -= 1;
    }
    Ok(cap)
}

/// One observed bus operating point used to solve for `D(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub n_active: u32,
    pub tau: u32,
    pub alpha: u32,
    /// Amperes measured (or specified) for the whole bus.
    pub observed_load: f64,
}

/// Solves the inrush term for each row so that [`bus_load`] reproduces the
/// observed load exactly.
pub fn calibrate_inrush(
    no_load_current: f64,
    current_slope: f64,
    rows: &[CalibrationRow],
) -> Result<BTreeMap<u32, f64>, FuseError> {
    let mut table = BTreeMap::new();
    for row in rows {
        if row.n_active == 0 {
            return Err(FuseError::NoActiveActuators);
        }
        if row.tau > TORQUE_REGISTER_MAX {
            return Err(FuseError::TorqueOutOfRange(row.tau));
        }
        let mut d =
            row.observed_load / f64::from(row.n_active) - current_slope * f64::from(row.tau) / 1000.0 - no_load_current;
        if d < 0.0 {
            // Round-off from an exactly consistent row (e.g. the stall endpoint).
            if d > -1e-12 {
                d = 0.0;
            } else {
                return Err(FuseError::NegativeInrush { alpha: row.alpha, value: d });
            }
        }
        if table.insert(row.alpha, d).is_some() {
            return Err(FuseError::DuplicateAccel(row.alpha));
        }
    }
    Ok(table)
}

/// Config section describing how to build the [`LoadModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LoadModelConfig {
    /// Observed operating points; each calibrates one accel register.
    #[serde(default)]
    pub inrush_calibration: Vec<CalibrationRow>,
    /// Inrush values given directly, in amperes per servo.
    #[serde(default)]
    pub inrush_table: BTreeMap<u32, f64>,
    #[serde(default)]
    pub interpolate: bool,
    /// Registers subtracted from every synthesized cap.
    #[serde(default)]
    pub margin_registers: u32,
}

impl LoadModelConfig {
    pub fn build(&self, no_load_current: f64, current_slope: f64) -> Result<LoadModel, ValidationError> {
        let calibrated = calibrate_inrush(no_load_current, current_slope, &self.inrush_calibration)
            .map_err(|e| ValidationError::new("load_model.inrush_calibration", e.to_string()))?;
        let mut table = self.inrush_table.clone();
        for (&alpha, &d) in &table {
            if !(d >= 0.0) {
                return Err(ValidationError::new(
                    format!("load_model.inrush_table.{alpha}"),
                    format!("inrush must be >= 0, got {d}"),
                ));
            }
        }
        for (alpha, d) in calibrated {
            if table.insert(alpha, d).is_some() {
                return Err(ValidationError::new(
                    format!("load_model.inrush_table.{alpha}"),
                    "accel register given both directly and by calibration",
                ));
            }
        }
        Ok(LoadModel { no_load_current, current_slope, inrush_table: table, interpolate: self.interpolate })
    }
}

/// Load and headroom at a given torque register.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub torque: u32,
    pub load: f64,
    pub headroom: f64,
}

/// Synthesized firmware limit for one bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseSetting {
    pub bus_id: String,
    /// Largest safe torque register, minus any configured margin.
    pub torque_cap: u32,
    /// Bus load at `torque_cap`.
    pub predicted_load: f64,
    /// Current available to this bus after compute loads and port sharing.
    pub port_limit: f64,
    pub headroom: f64,
    /// The bus's configured torque register evaluated against the same limit.
    pub configured: OperatingPoint,
}

/// Current budget each bus may use: the port's effective limit minus peak
/// compute draw on that port, shared between buses in proportion to their
/// active actuator counts.
pub fn bus_port_limits(topology: &PowerTopology) -> BTreeMap<String, f64> {
    let mut limits = BTreeMap::new();
    for port in &topology.ports {
        let compute: f64 = topology.compute_on_port(&port.id).map(|c| c.peak_current(port.nominal_voltage)).sum();
        let available = port.effective_limit() - compute;
        let total_active: u32 = topology.buses_on_port(&port.id).map(|b| b.active_count).sum();
        for bus in topology.buses_on_port(&port.id) {
            let share = available * f64::from(bus.active_count) / f64::from(total_active);
            limits.insert(bus.id.clone(), share);
        }
    }
    limits
}

/// One fuse setting per bus, in topology order.
pub fn synthesize_fuses(
    topology: &PowerTopology,
    model: &LoadModel,
    margin_registers: u32,
) -> Result<Vec<FuseSetting>, FuseError> {
    let limits = bus_port_limits(topology);
    topology
        .buses
        .iter()
        .map(|bus| {
            let wrap = |source: FuseError| FuseError::Bus { bus_id: bus.id.clone(), source: Box::new(source) };
            let port_limit = limits[&bus.id];
            let cap = max_torque(model, port_limit, bus.active_count, bus.accel_setting)
                .map_err(wrap)?
                .saturating_sub(margin_registers);
            let predicted_load = bus_load(model, bus.active_count, cap, bus.accel_setting).map_err(wrap)?;
            let configured_load = bus_load(model, bus.active_count, bus.torque_cap, bus.accel_setting).map_err(wrap)?;
            Ok(FuseSetting {
                bus_id: bus.id.clone(),
                torque_cap: cap,
                predicted_load,
                port_limit,
                headroom: port_limit - predicted_load,
                configured: OperatingPoint {
                    torque: bus.torque_cap,
                    load: configured_load,
                    headroom: port_limit - configured_load,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrated_model() -> LoadModel {
        let rows = [
            CalibrationRow { n_active: 5, tau: 650, alpha: 20, observed_load: 9.84 },
            CalibrationRow { n_active: 3, tau: 450, alpha: 40, observed_load: 4.90 },
        ];
        LoadModel::new(0.18, 2.52, calibrate_inrush(0.18, 2.52, &rows).unwrap())
    }

    #[test]
    fn calibration_solves_closed_form() {
        let m = calibrated_model();
        // 9.84/5 - 2.52*0.65 - 0.18 and 4.90/3 - 2.52*0.45 - 0.18, by hand.
        assert!((m.inrush(20).unwrap() - 0.15).abs() < 1e-12);
        assert!((m.inrush(40).unwrap() - 0.319_333_333_333).abs() < 1e-9);
    }

    #[test]
    fn stall_row_recovers_zero_inrush() {
        let rows = [CalibrationRow { n_active: 1, tau: 1000, alpha: 0, observed_load: 2.7 }];
        let t = calibrate_inrush(0.18, 2.52, &rows).unwrap();
        assert!(t[&0].abs() < 1e-12);
    }

    #[test]
    fn negative_inrush_is_reported() {
        let rows = [CalibrationRow { n_active: 5, tau: 650, alpha: 20, observed_load: 5.0 }];
        assert!(matches!(calibrate_inrush(0.18, 2.52, &rows), Err(FuseError::NegativeInrush { alpha: 20, .. })));
    }

    #[test]
    fn bus_load_examples() {
        let m = calibrated_model();
        assert!((bus_load(&m, 5, 650, 20).unwrap() - 9.84).abs() < 1e-9);
        assert!((bus_load(&m, 3, 450, 40).unwrap() - 4.90).abs() < 1e-9);
        let idle = LoadModel::new(0.18, 2.52, BTreeMap::from([(0, 0.0)]));
        assert!((bus_load(&idle, 1, 0, 0).unwrap() - 0.18).abs() < 1e-15);
    }

    #[test]
    fn bus_load_rejects_bad_inputs() {
        let m = calibrated_model();
        assert_eq!(bus_load(&m, 5, 650, 30), Err(FuseError::UnknownAccel(30)));
        assert_eq!(bus_load(&m, 5, 1001, 20), Err(FuseError::TorqueOutOfRange(1001)));
        assert_eq!(bus_load(&m, 0, 10, 20), Err(FuseError::NoActiveActuators));
    }

    #[test]
    fn interpolation_only_when_enabled() {
        let mut m = calibrated_model();
        assert!(m.inrush(30).is_err());
        m.interpolate = true;
        let mid = 0.5 * (0.15 + m.inrush(40).unwrap());
        assert!((m.inrush(30).unwrap() - mid).abs() < 1e-12);
        assert!(m.inrush(50).is_err());
    }

    #[test]
    fn max_torque_examples() {
        let m = calibrated_model();
        // (10/5 - 0.18 - 0.15)/2.52*1000 = 662.698...
        assert_eq!(max_torque(&m, 10.0, 5, 20).unwrap(), 662);
        // (5/3 - 0.18 - 0.319333)/2.52*1000 = 463.227...
        assert_eq!(max_torque(&m, 5.0, 3, 40).unwrap(), 463);
        let boundary = 4.0 * (0.18 + 0.15);
        assert_eq!(max_torque(&m, boundary, 4, 20).unwrap(), 0);
    }

    #[test]
    fn infeasible_reports_minimum_load() {
        let m = calibrated_model();
        match max_torque(&m, 1.0, 5, 20) {
            Err(FuseError::Infeasible { min_load, port_limit }) => {
                assert!((min_load - 1.65).abs() < 1e-12);
                assert_eq!(port_limit, 1.0);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn inversion_is_tight(limit in 0.5f64..40.0, n in 1u32..12, alpha in proptest::sample::select(vec![20u32, 40])) {
            let m = calibrated_model();
            match max_torque(&m, limit, n, alpha) {
                Ok(cap) => {
                    proptest::prop_assert!(bus_load(&m, n, cap, alpha).unwrap() <= limit + CURRENT_EPS);
                    if cap < TORQUE_REGISTER_MAX {
                        proptest::prop_assert!(bus_load(&m, n, cap + 1, alpha).unwrap() > limit);
                    }
                }
                Err(FuseError::Infeasible { min_load, .. }) => proptest::prop_assert!(min_load > limit),
                Err(e) => proptest::prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn load_strictly_increases(tau in 0u32..1000, n in 1u32..16) {
            let m = calibrated_model();
            let base = bus_load(&m, n, tau, 20).unwrap();
            proptest::prop_assert!(bus_load(&m, n, tau + 1, 20).unwrap() > base);
            proptest::prop_assert!(bus_load(&m, n + 1, tau, 20).unwrap() > base);
        }

        #[test]
        fn cap_decreases_in_count_and_inrush(limit in 8.0f64..30.0, n in 1u32..4) {
            let m = calibrated_model();
            let c_n = max_torque(&m, limit, n, 20).unwrap();
            let c_n1 = max_torque(&m, limit, n + 1, 20).unwrap();
            proptest::prop_assert!(c_n1 < c_n || c_n1 == 0 || c_n == TORQUE_REGISTER_MAX);
            let c_soft = max_torque(&m, limit, n, 40).unwrap();
            proptest::prop_assert!(c_soft < c_n || c_soft == TORQUE_REGISTER_MAX);
        }

        #[test]
        fn calibration_round_trips(n in 1u32..10, tau in 0u32..=1000, d in 0.0f64..1.0) {
            let load = f64::from(n) * (2.52 * f64::from(tau) / 1000.0 + 0.18 + d);
            let rows = [CalibrationRow { n_active: n, tau, alpha: 7, observed_load: load }];
            let m = LoadModel::new(0.18, 2.52, calibrate_inrush(0.18, 2.52, &rows).unwrap());
            proptest::prop_assert!((bus_load(&m, n, tau, 7).unwrap() - load).abs() <= 1e-6);
        }
    }
}
