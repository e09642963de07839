//! Linear-spring model of printed link compliance.
//!
//! A link loaded at its tip behaves as a spring `F = k * delta`; the work it
//! soaks up is `U = k * delta^2 / 2`. Stiffness is fitted from a single
//! static load/deflection measurement. Deflection was read to 1 mm, so a
//! 2 mm reading carries roughly +/-25% uncertainty on `k`.

use serde::{Deserialize, Serialize};

use crate::model::ValidationError;

/// Standard gravity, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.806_65;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StiffnessError {
    #[error("deflection must be > 0, got {0}")]
    NonPositiveDeflection(f64),
    #[error("reach must be > 0, got {0}")]
    NonPositiveReach(f64),
}

/// One print profile and its cantilever test result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub name: String,
    pub walls: u32,
    /// Infill fraction in (0, 1].
    pub infill: f64,
    /// Kilograms.
    pub mass: f64,
    /// Meters from the support to the load.
    pub test_length: f64,
    /// Kilograms hung at `test_length`.
    pub test_load_mass: f64,
    /// Meters.
    pub measured_deflection: f64,
    /// Newtons; gearbox yield measurements, kept as calibration data.
    pub yield_force_mean: f64,
    pub yield_force_std: f64,
}

impl LinkProfile {
    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        let f = |sub: &str| format!("{field}.{sub}");
        for (name, v) in
            [("mass", self.mass), ("test_length", self.test_length), ("measured_deflection", self.measured_deflection)]
        {
            if !(v > 0.0) {
                return Err(ValidationError::new(f(name), format!("must be > 0, got {v}")));
            }
        }
        if self.walls < 1 {
            return Err(ValidationError::new(f("walls"), "must be >= 1"));
        }
        if !(self.infill > 0.0 && self.infill <= 1.0) {
            return Err(ValidationError::new(f("infill"), format!("must be in (0, 1], got {}", self.infill)));
        }
        Ok(())
    }
}

/// The three characterized profiles: 100 g at 18.6 cm, 2 mm deflection each.
pub fn reference_profiles() -> Vec<LinkProfile> {
    let row = |name: &str, walls, infill, mass, mean, std| LinkProfile {
        name: name.into(),
        walls,
        infill,
        mass,
        test_length: 0.186,
        test_load_mass: 0.100,
        measured_deflection: 0.002,
        yield_force_mean: mean,
        yield_force_std: std,
    };
    vec![
        row("Baseline", 2, 0.15, 0.758, 11.06, 0.63),
        row("High-Infill", 2, 0.50, 0.996, 12.00, 1.28),
        row("High-Shell", 4, 0.15, 0.838, 18.49, 2.15),
    ]
}

/// `k = m g / delta`, in N/m.
pub fn stiffness_from_deflection(profile: &LinkProfile) -> Result<f64, StiffnessError> {
    if !(profile.measured_deflection > 0.0) {
        return Err(StiffnessError::NonPositiveDeflection(profile.measured_deflection));
    }
    Ok(profile.test_load_mass * STANDARD_GRAVITY / profile.measured_deflection)
}

/// Elastic energy `k delta^2 / 2`, in joules.
pub fn elastic_energy(k: f64, delta: f64) -> f64 {
    0.5 * k * delta * delta
}

/// Tip force at which a rigid arm of length `reach` stalls a joint
/// delivering `stall_torque`.
pub fn payload_bound(reach: f64, stall_torque: f64) -> Result<f64, StiffnessError> {
    if !(reach > 0.0) {
        return Err(StiffnessError::NonPositiveReach(reach));
    }
    Ok(stall_torque / reach)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub name: String,
    /// N/m.
    pub stiffness: f64,
    /// N/m per kg.
    pub stiffness_per_mass: f64,
    /// Joules stored at the measured deflection.
    pub energy_at_deflection: f64,
    /// Newtons at `test_length`.
    pub payload_bound: f64,
    pub yield_force_mean: f64,
    pub yield_force_std: f64,
}

/// Per-profile report, sorted by stiffness-to-mass ratio (best first).
pub fn report(profiles: &[LinkProfile], stall_torque: f64) -> Result<Vec<ProfileReport>, StiffnessError> {
    let mut rows = profiles
        .iter()
        .map(|p| {
            let k = stiffness_from_deflection(p)?;
            Ok(ProfileReport {
                name: p.name.clone(),
                stiffness: k,
                stiffness_per_mass: k / p.mass,
                energy_at_deflection: elastic_energy(k, p.measured_deflection),
                payload_bound: payload_bound(p.test_length, stall_torque)?,
                yield_force_mean: p.yield_force_mean,
                yield_force_std: p.yield_force_std,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| b.stiffness_per_mass.total_cmp(&a.stiffness_per_mass));
    Ok(rows)
}
