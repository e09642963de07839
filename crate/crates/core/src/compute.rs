//! Inference latency budgeting for chunked action execution.
//!
//! A policy that emits `H` actions per inference and executes the first `K`
//! before replanning keeps the robot fed as long as the next plan lands before
//! the `K`-action prefix runs out.

use serde::{Deserialize, Serialize};

use crate::model::PduPort;

/// Compute current ceiling at 12 V (25.2 W).
pub const COMPUTE_CURRENT_ENVELOPE: f64 = 2.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatencyError {
    #[error("mean latency must be > 0, got {0}")]
    NonPositiveLatency(f64),
    #[error("profile {name}: {message}")]
    InvalidProfile { name: String, message: String },
}

/// Measured end-to-end latency of one policy configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub model_name: String,
    /// Actions produced per inference.
    pub horizon: u32,
    /// Actions executed before replanning.
    pub prefix: u32,
    #[serde(default)]
    pub sampling_steps: Option<u32>,
    /// Seconds.
    pub mean_latency: f64,
    /// Seconds.
    #[serde(default)]
    pub std_latency: f64,
}

impl LatencyProfile {
    pub fn validate(&self) -> Result<(), LatencyError> {
        let bad = |message: String| Err(LatencyError::InvalidProfile { name: self.model_name.clone(), message });
        if self.prefix < 1 || self.prefix > self.horizon {
            return bad(format!("prefix {} must be in 1..={}", self.prefix, self.horizon));
        }
        if !(self.mean_latency > 0.0) {
            return bad(format!("mean_latency must be > 0, got {}", self.mean_latency));
        }
        if !(self.std_latency >= 0.0) {
            return bad(format!("std_latency must be >= 0, got {}", self.std_latency));
        }
        Ok(())
    }
}

/// The three benchmarked policies on the onboard GPU.
pub fn reference_profiles() -> Vec<LatencyProfile> {
    vec![
        LatencyProfile {
            model_name: "ACT".into(),
            horizon: 100,
            prefix: 50,
            sampling_steps: None,
            mean_latency: 0.0360,
            std_latency: 0.0009,
        },
        LatencyProfile {
            model_name: "Diffusion".into(),
            horizon: 20,
            prefix: 10,
            sampling_steps: Some(10),
            mean_latency: 0.5396,
            std_latency: 0.0001,
        },
        LatencyProfile {
            model_name: "SmolVLA".into(),
            horizon: 20,
            prefix: 10,
            sampling_steps: Some(10),
            mean_latency: 0.7138,
            std_latency: 0.0093,
        },
    ]
}

/// Upper bound on plan refresh rate: the inverse of mean latency.
pub fn replan_frequency(profile: &LatencyProfile) -> Result<f64, LatencyError> {
    if !(profile.mean_latency > 0.0) {
        return Err(LatencyError::NonPositiveLatency(profile.mean_latency));
    }
    Ok(1.0 / profile.mean_latency)
}

/// Rounds to `decimals` places with ties going up.
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale + 0.5).floor() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub action_rate: f64,
    pub feasible: bool,
    /// Seconds between plan arrival and prefix exhaustion; negative when late.
    pub slack: f64,
}

/// Whether a new plan (mean plus `jitter_sigmas` standard deviations) arrives
/// before `K` actions at `action_rate` have been consumed.
pub fn schedule_feasibility(profile: &LatencyProfile, action_rate: f64, jitter_sigmas: f64) -> Feasibility {
    let budget = f64::from(profile.prefix) / action_rate;
    let latency = profile.mean_latency + jitter_sigmas * profile.std_latency;
    let slack = budget - latency;
    Feasibility { action_rate, feasible: slack >= 0.0, slack }
}

/// Candidate action streaming rates swept in reports, in hertz.
pub const DEFAULT_ACTION_RATES: [f64; 6] = [10.0, 20.0, 30.0, 50.0, 60.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub model_name: String,
    pub f_replan_max: f64,
    /// `f_replan_max` rounded half-up to one decimal, as printed in reports.
    pub f_replan_display: f64,
    pub action_rate_feasible: Vec<Feasibility>,
    /// `K * f_replan_max`.
    pub max_sustainable_action_rate: f64,
    pub jitter_sigmas: f64,
}

pub fn budget_report(
    profile: &LatencyProfile,
    action_rates: &[f64],
    jitter_sigmas: f64,
) -> Result<BudgetReport, LatencyError> {
    profile.validate()?;
    let f = replan_frequency(profile)?;
    Ok(BudgetReport {
        model_name: profile.model_name.clone(),
        f_replan_max: f,
        f_replan_display: round_half_up(f, 1),
        action_rate_feasible: action_rates.iter().map(|&r| schedule_feasibility(profile, r, jitter_sigmas)).collect(),
        max_sustainable_action_rate: f64::from(profile.prefix) * f,
        jitter_sigmas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputePowerCheck {
    pub watts: f64,
    pub current: f64,
    pub fits_envelope: bool,
    pub fits_port: bool,
    pub fits: bool,
}

/// Checks a compute draw against the port limit and the 2.1 A compute envelope.
pub fn compute_power_check(watts: f64, port: &PduPort) -> ComputePowerCheck {
    let current = watts / port.nominal_voltage;
    let fits_envelope = current <= COMPUTE_CURRENT_ENVELOPE + 1e-12;
    let fits_port = current <= port.effective_limit() + 1e-12;
    ComputePowerCheck { watts, current, fits_envelope, fits_port, fits: fits_envelope && fits_port }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(name: &str) -> LatencyProfile {
        reference_profiles().into_iter().find(|p| p.model_name == name).unwrap()
    }

    #[test]
    fn act_feasible_at_100hz_with_three_sigma() {
        let f = schedule_feasibility(&profile("ACT"), 100.0, 3.0);
        assert!(f.feasible);
        // 50/100 - (0.036 + 3 * 0.0009)
        assert!((f.slack - 0.4613).abs() < 1e-12);
    }

    #[test]
    fn diffusion_infeasible_at_100hz() {
        let p = profile("Diffusion");
        let f = schedule_feasibility(&p, 100.0, 0.0);
        assert!(!f.feasible);
        let r = budget_report(&p, &[100.0], 0.0).unwrap();
        assert!((r.max_sustainable_action_rate - 10.0 / 0.5396).abs() < 1e-12);
        assert_eq!(round_half_up(r.max_sustainable_action_rate, 1), 18.5);
    }

    #[test]
    fn tiny_action_rate_is_always_feasible() {
        for p in reference_profiles() {
            assert!(schedule_feasibility(&p, 1e-6, 3.0).feasible);
        }
    }

    #[test]
    fn boundary_rate_has_zero_slack() {
        for p in reference_profiles() {
            let rate = f64::from(p.prefix) * replan_frequency(&p).unwrap();
            assert!(schedule_feasibility(&p, rate, 0.0).slack.abs() < 1e-12);
        }
    }

    #[test]
    fn replan_rejects_non_positive_latency() {
        let mut p = profile("ACT");
        p.mean_latency = 0.0;
        assert_eq!(replan_frequency(&p), Err(LatencyError::NonPositiveLatency(0.0)));
    }

    #[test]
    fn invalid_prefix_rejected() {
        let mut p = profile("ACT");
        p.prefix = 101;
        assert!(p.validate().is_err());
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(27.777, 1), 27.8);
        assert_eq!(round_half_up(1.25, 1), 1.3);
        assert_eq!(round_half_up(1.449, 1), 1.4);
    }

    #[test]
    fn compute_power_examples() {
        let port = crate::model::PduPort {
            id: "usb_c3".into(),
            rated_current: 5.0,
            rated_power: 100.0,
            nominal_voltage: 12.0,
            trip_delay: 0.05,
            internal_resistance: 0.01,
            budget_current: None,
        };
        let ok = compute_power_check(25.0, &port);
        assert!(ok.fits && (ok.current - 25.0 / 12.0).abs() < 1e-12 && ok.current < 2.1);
        assert!(!compute_power_check(40.0, &port).fits_envelope);
        assert!(compute_power_check(0.0, &port).fits);
    }

    proptest::proptest! {
        #[test]
        fn replan_strictly_decreasing(a in 1e-3f64..5.0, d in 1e-6f64..1.0) {
            let mut p = profile("ACT");
            p.mean_latency = a;
            let fa = replan_frequency(&p).unwrap();
            p.mean_latency = a + d;
            proptest::prop_assert!(replan_frequency(&p).unwrap() < fa);
        }
    }
}
