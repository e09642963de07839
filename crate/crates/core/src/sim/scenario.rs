use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fuse::{FuseSetting, LoadModel};
use crate::model::{PowerTopology, ValidationError, TORQUE_REGISTER_MAX};

/// Time slack when comparing window boundaries.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// Load placed on one bus over `[t_start, t_end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCommand {
    pub t_start: f64,
    pub t_end: f64,
    pub bus_id: String,
    pub n_active: u32,
    pub tau: u32,
    pub alpha: u32,
    /// Repeat the window every `period` seconds until the end of the scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

/// Compute draw over `[t_start, t_end)`, replacing the idle draw of one compute load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub watts: f64,
    /// Compute load name; the first compute load when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<String>,
}

/// Operator power-cycle of a port, the only way out of a trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCycle {
    pub t: f64,
    pub port_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    #[serde(default)]
    pub commands: Vec<LoadCommand>,
    #[serde(default)]
    pub compute_profile: Vec<ComputeWindow>,
    #[serde(default)]
    pub power_cycles: Vec<PowerCycle>,
}

impl Scenario {
    /// No commands: only idle compute draw.
    pub fn quiescent(duration: f64, dt: f64) -> Self {
        Self { duration, dt, commands: Vec::new(), compute_profile: Vec::new(), power_cycles: Vec::new() }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Commands with `period` unrolled into individual windows.
    pub fn expanded_commands(&self) -> Vec<LoadCommand> {
        let mut out = Vec::new();
        for c in &self.commands {
            match c.period {
                Some(p) if p > 0.0 => {
                    let mut k = 0u32;
                    loop {
                        let shift = f64::from(k) * p;
                        let (s, e) = (c.t_start + shift, c.t_end + shift);
                        if e > self.duration + TIME_EPS {
                            break;
                        }
                        out.push(LoadCommand { t_start: s, t_end: e, period: None, ..c.clone() });
                        k += 1;
                    }
                }
                _ => out.push(LoadCommand { period: None, ..c.clone() }),
            }
        }
        out
    }

    pub fn validate(&self, topology: &PowerTopology, model: &LoadModel) -> Result<(), ValidationError> {
        if !(self.dt > 0.0) {
            return Err(ValidationError::new("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) {
            return Err(ValidationError::new(
                "duration",
                format!("must be >= dt ({}), got {}", self.dt, self.duration),
            ));
        }
        for (i, c) in self.commands.iter().enumerate() {
            let f = |sub: &str| format!("commands[{i}].{sub}");
            if !(c.t_start >= -TIME_EPS && c.t_start < c.t_end && c.t_end <= self.duration + TIME_EPS) {
                return Err(ValidationError::new(
                    f("t_start"),
                    format!("window [{}, {}) must lie within [0, {}]", c.t_start, c.t_end, self.duration),
                ));
            }
            if let Some(p) = c.period {
                if !(p > c.t_end - c.t_start) {
                    return Err(ValidationError::new(f("period"), "period must exceed the window length"));
                }
            }
            if topology.bus(&c.bus_id).is_none() {
                return Err(ValidationError::new(f("bus_id"), format!("unknown bus \"{}\"", c.bus_id)));
            }
            if c.n_active < 1 {
                return Err(ValidationError::new(f("n_active"), "must be >= 1"));
            }
            if c.tau > TORQUE_REGISTER_MAX {
                return Err(ValidationError::new(f("tau"), format!("must be in 0..=1000, got {}", c.tau)));
            }
            if model.inrush(c.alpha).is_err() {
                return Err(ValidationError::new(
                    f("alpha"),
                    format!("no inrush entry for accel register {}", c.alpha),
                ));
            }
        }
        let mut per_bus: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        let expanded = self.expanded_commands();
        for c in &expanded {
            per_bus.entry(c.bus_id.as_str()).or_default().push((c.t_start, c.t_end));
        }
        for (bus, windows) in &mut per_bus {
            windows.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = windows.windows(2).find(|w| w[1].0 < w[0].1 - TIME_EPS) {
                return Err(ValidationError::new(
                    "commands",
                    format!("overlapping commands on bus \"{bus}\" at t = {}", w[1].0),
                ));
            }
        }
        for (i, w) in self.compute_profile.iter().enumerate() {
            let f = |sub: &str| format!("compute_profile[{i}].{sub}");
            if !(w.t_start >= -TIME_EPS && w.t_start < w.t_end && w.t_end <= self.duration + TIME_EPS) {
                return Err(ValidationError::new(f("t_start"), "window must lie within the scenario"));
            }
            if !(w.watts >= 0.0) {
                return Err(ValidationError::new(f("watts"), format!("must be >= 0, got {}", w.watts)));
            }
            match &w.load {
                Some(name) if !topology.compute_loads.iter().any(|c| &c.name == name) => {
                    return Err(ValidationError::new(f("load"), format!("unknown compute load \"{name}\"")));
                }
                None if topology.compute_loads.is_empty() => {
                    return Err(ValidationError::new(f("load"), "topology has no compute loads"));
                }
                _ => {}
            }
        }
        for (i, pc) in self.power_cycles.iter().enumerate() {
            if topology.port(&pc.port_id).is_none() {
                return Err(ValidationError::new(
                    format!("power_cycles[{i}].port_id"),
                    format!("unknown port \"{}\"", pc.port_id),
                ));
            }
        }
        Ok(())
    }

    /// Shifts every bus's commands by one offset drawn uniformly from
    /// `[-max_shift, max_shift]`, clamped so windows stay inside the scenario.
    /// Offsets come from ChaCha8 seeded with `seed`, drawn in sorted bus-id order.
    pub fn jittered(&self, seed: u64, max_shift: f64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut commands = self.expanded_commands();
        let mut bounds: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for c in &commands {
            let e = bounds.entry(c.bus_id.clone()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.min(c.t_start);
            e.1 = e.1.max(c.t_end);
        }
        let offsets: BTreeMap<String, f64> = bounds
            .into_iter()
            .map(|(bus, (first, last))| {
                let raw = if max_shift > 0.0 { rng.random_range(-max_shift..=max_shift) } else { 0.0 };
                (bus, raw.clamp(-first, self.duration - last))
            })
            .collect();
        for c in &mut commands {
            let off = offsets[&c.bus_id];
            c.t_start += off;
            c.t_end += off;
        }
        Scenario { commands, ..self.clone() }
    }

    /// Clamps each command's torque register to its bus's synthesized cap.
    pub fn with_fuses(&self, fuses: &[FuseSetting]) -> Scenario {
        let mut out = self.clone();
        for c in &mut out.commands {
            if let Some(f) = fuses.iter().find(|f| f.bus_id == c.bus_id) {
                c.tau = c.tau.min(f.torque_cap);
            }
        }
        out
    }
}
