//! Fixed-timestep simulation of the PDU ports under load scenarios.
//!
//! Each step sums the bus loads of the active commands and the compute draw on
//! every port, applies an affine droop `V = V0 - R * I`, and runs an
//! overcurrent timer. A port that stays above its effective limit for its
//! trip delay shuts down: current drops to zero and the output sits at a
//! small residual voltage until an explicit power cycle. Energy per port is
//! the trapezoidal integral of `V * I`.

mod budget;
mod scenario;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub use budget::{check_budget, PortBudget, PowerBudget};
pub use scenario::{ComputeWindow, LoadCommand, PowerCycle, Scenario};

use crate::fuse::{bus_load, FuseSetting, LoadModel};
use crate::model::{PowerTopology, ValidationError};
use scenario::TIME_EPS;

/// Tunables of the electrical model that are not part of the topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Volts left on a port after it trips.
    pub residual_voltage: f64,
    /// Port voltage below which downstream electronics reset.
    pub brownout_voltage: f64,
    /// Maximum per-bus start-time shift applied when a seed is given.
    pub jitter_max: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { residual_voltage: 0.3, brownout_voltage: 9.0, jitter_max: 0.1 }
    }
}

impl SimSettings {
    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        if !(self.residual_voltage >= 0.0) {
            return Err(ValidationError::new(format!("{field}.residual_voltage"), "must be >= 0"));
        }
        if !(self.brownout_voltage > self.residual_voltage) {
            return Err(ValidationError::new(format!("{field}.brownout_voltage"), "must exceed residual_voltage"));
        }
        if !(self.jitter_max >= 0.0) {
            return Err(ValidationError::new(format!("{field}.jitter_max"), "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Clamp command torques to these caps before simulating.
    pub fuses: Option<Vec<FuseSetting>>,
    /// Seed for command phase jitter; no jitter when `None`.
    pub seed: Option<u64>,
    pub settings: SimSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario {0}")]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Trip,
    Brownout,
    Recovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: f64,
    pub kind: EventKind,
    pub port_id: String,
}

/// Per-port time series, one sample per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortTrace {
    pub port_id: String,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    /// Cumulative watt-hours.
    pub energy_wh: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub dt: f64,
    pub times: Vec<f64>,
    pub ports: Vec<PortTrace>,
    pub events: Vec<SimEvent>,
}

impl SimTrace {
    pub fn port(&self, id: &str) -> Option<&PortTrace> {
        self.ports.iter().find(|p| p.port_id == id)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &SimEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn trip_count(&self) -> usize {
        self.events_of(EventKind::Trip).count()
    }

    /// Total energy drawn from the battery across all ports.
    pub fn total_energy_wh(&self) -> f64 {
        self.ports.iter().filter_map(|p| p.energy_wh.last()).sum()
    }

    /// Writes `t,port_id,current_a,voltage_v,energy_wh`, one row per step and port.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,port_id,current_a,voltage_v,energy_wh")?;
        for (k, t) in self.times.iter().enumerate() {
            for p in &self.ports {
                writeln!(w, "{t:.6},{},{:.6},{:.6},{:.9}", p.port_id, p.current[k], p.voltage[k], p.energy_wh[k])?;
            }
        }
        Ok(())
    }
}

struct ResolvedCommand {
    port: usize,
    t_start: f64,
    t_end: f64,
    current: f64,
}

struct ResolvedCompute {
    port: usize,
    idle_current: f64,
    voltage: f64,
    windows: Vec<(f64, f64, f64)>,
}

#[derive(Default, Clone)]
struct PortState {
    tripped: bool,
    over_since: Option<f64>,
    low: bool,
}

fn active(t: f64, start: f64, end: f64) -> bool {
    t >= start - TIME_EPS && t < end - TIME_EPS
}

/// Runs `scenario` against `topology`. Trips and brownouts are events in the
/// returned trace, never errors.
pub fn simulate(
    topology: &PowerTopology,
    model: &LoadModel,
    scenario: &Scenario,
    options: &SimOptions,
) -> Result<SimTrace, SimError> {
    scenario.validate(topology, model)?;
    let mut scenario = match options.seed {
        Some(seed) => scenario.jittered(seed, options.settings.jitter_max),
        None => Scenario { commands: scenario.expanded_commands(), ..scenario.clone() },
    };
    if let Some(fuses) = &options.fuses {
        scenario = scenario.with_fuses(fuses);
    }
    let settings = options.settings;

    let commands: Vec<ResolvedCommand> = scenario
        .commands
        .iter()
        .map(|c| {
            let bus = topology.bus(&c.bus_id).expect("validated bus");
            ResolvedCommand {
                port: topology.port_index(&bus.port_id).expect("validated port"),
                t_start: c.t_start,
                t_end: c.t_end,
                current: bus_load(model, c.n_active, c.tau, c.alpha).expect("validated load"),
            }
        })
        .collect();
    let compute: Vec<ResolvedCompute> = topology
        .compute_loads
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let port = topology.port_index(&c.port_id).expect("validated port");
            let windows = scenario
                .compute_profile
                .iter()
                .filter(|w| match &w.load {
                    Some(name) => *name == c.name,
                    None => i == 0,
                })
                .map(|w| (w.t_start, w.t_end, w.watts))
                .collect();
            ResolvedCompute {
                port,
                idle_current: c.steady_current,
                voltage: topology.ports[port].nominal_voltage,
                windows,
            }
        })
        .collect();
    let mut cycles: Vec<(f64, usize)> = scenario
        .power_cycles
        .iter()
        .map(|pc| (pc.t, topology.port_index(&pc.port_id).expect("validated port")))
        .collect();
    cycles.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut next_cycle = 0;

    let n_steps = scenario.steps();
    let n_ports = topology.ports.len();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut ports: Vec<PortTrace> = topology
        .ports
        .iter()
        .map(|p| PortTrace {
            port_id: p.id.clone(),
            current: Vec::with_capacity(n_steps + 1),
            voltage: Vec::with_capacity(n_steps + 1),
            energy_wh: Vec::with_capacity(n_steps + 1),
        })
        .collect();
    let mut events = Vec::new();
    let mut state = vec![PortState::default(); n_ports];
    let mut raw = vec![0.0; n_ports];
    let mut prev_power = vec![0.0; n_ports];

    for k in 0..=n_steps {
        let t = k as f64 * scenario.dt;
        times.push(t);

        while next_cycle < cycles.len() && cycles[next_cycle].0 <= t + TIME_EPS {
            let port = cycles[next_cycle].1;
            if state[port].tripped {
                state[port] = PortState::default();
                events.push(SimEvent { t, kind: EventKind::Recovery, port_id: topology.ports[port].id.clone() });
            }
            next_cycle += 1;
        }

        raw.iter_mut().for_each(|r| *r = 0.0);
        for c in commands.iter().filter(|c| active(t, c.t_start, c.t_end)) {
            raw[c.port] += c.current;
        }
        for c in &compute {
            let draw = c.windows.iter().find(|w| active(t, w.0, w.1)).map_or(c.idle_current, |w| w.2 / c.voltage);
            raw[c.port] += draw;
        }

        for (i, port) in topology.ports.iter().enumerate() {
            let st = &mut state[i];
            let mut current = raw[i];
            if !st.tripped {
                if current > port.effective_limit() + 1e-9 {
                    let since = *st.over_since.get_or_insert(t);
                    if t - since >= port.trip_delay - TIME_EPS {
                        st.tripped = true;
                        events.push(SimEvent { t, kind: EventKind::Trip, port_id: port.id.clone() });
                    }
                } else {
                    st.over_since = None;
                }
            }
            let voltage = if st.tripped {
                current = 0.0;
                settings.residual_voltage
            } else {
                port.voltage_at(current)
            };
            let low = voltage < settings.brownout_voltage;
            if low && !st.low {
                events.push(SimEvent { t, kind: EventKind::Brownout, port_id: port.id.clone() });
            }
            st.low = low;

            let power = voltage * current;
            let trace = &mut ports[i];
            let energy = match trace.energy_wh.last() {
                Some(&e) => e + 0.5 * (prev_power[i] + power) * scenario.dt / 3600.0,
                None => 0.0,
            };
            prev_power[i] = power;
            trace.current.push(current);
            trace.voltage.push(voltage);
            trace.energy_wh.push(energy);
        }
    }

    Ok(SimTrace { dt: scenario.dt, times, ports, events })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{ActuatorSpec, BusConfig, ComputeLoad, PduPort};

    fn topology() -> PowerTopology {
        PowerTopology {
            actuators: (0..4).map(|i| ActuatorSpec::sts3215(format!("s{i}"))).collect(),
            ports: vec![PduPort {
                id: "p".into(),
                rated_current: 10.0,
                rated_power: 140.0,
                nominal_voltage: 12.0,
                trip_delay: 0.05,
                internal_resistance: 0.01,
                budget_current: None,
            }],
            buses: vec![BusConfig {
                id: "b".into(),
                port_id: "p".into(),
                actuator_ids: (0..4).map(|i| format!("s{i}")).collect(),
                active_count: 4,
                torque_cap: 500,
                accel_setting: 0,
            }],
            compute_loads: vec![ComputeLoad {
                name: "c".into(),
                steady_current: 1.0,
                port_id: "p".into(),
                peak_watts: None,
            }],
            battery_capacity: 288.0,
            pdu_power: 300.0,
        }
    }

    fn model() -> LoadModel {
        LoadModel::new(0.18, 2.52, BTreeMap::from([(0, 0.0)]))
    }

    /// `n` servos at full torque draw `2.7 n` A.
    fn burst(t0: f64, t1: f64, n: u32) -> LoadCommand {
        LoadCommand { t_start: t0, t_end: t1, bus_id: "b".into(), n_active: n, tau: 1000, alpha: 0, period: None }
    }

    fn run(sc: &Scenario) -> SimTrace {
        simulate(&topology(), &model(), sc, &SimOptions::default()).unwrap()
    }

    #[test]
    fn quiescent_energy_is_idle_power_times_time() {
        let tr = run(&Scenario::quiescent(60.0, 0.01));
        let p = &tr.ports[0];
        assert!(p.voltage.iter().all(|&v| (v - 11.99).abs() < 1e-12));
        let expected = 11.99 * 1.0 * 60.0 / 3600.0;
        assert!((tr.total_energy_wh() - expected).abs() < 1e-12);
        assert!(tr.events.is_empty());
    }

    #[test]
    fn sustained_overcurrent_trips_after_delay() {
        let mut sc = Scenario::quiescent(2.0, 0.001);
        // 1 A idle + 4 * 2.7 A = 11.8 A on a 10 A port from t = 1 s.
        sc.commands.push(burst(1.0, 2.0, 4));
        let tr = run(&sc);
        let trip: Vec<_> = tr.events_of(EventKind::Trip).collect();
        assert_eq!(trip.len(), 1);
        assert!((trip[0].t - 1.05).abs() < 1e-9);
        assert_eq!(tr.events_of(EventKind::Brownout).count(), 1);
        let k = tr.times.iter().position(|&t| t > 1.06).unwrap();
        assert_eq!(tr.ports[0].voltage[k], 0.3);
        assert_eq!(tr.ports[0].current[k], 0.0);
        // The port stays down after the load is gone.
        assert_eq!(*tr.ports[0].voltage.last().unwrap(), 0.3);
        // Just before the trip the port droops under the full load.
        let before = tr.times.iter().position(|&t| t > 1.04).unwrap();
        assert!((tr.ports[0].voltage[before] - (12.0 - 0.01 * 11.8)).abs() < 1e-9);
    }

    #[test]
    fn pulse_shorter_than_delay_does_not_trip() {
        let mut sc = Scenario::quiescent(1.0, 0.001);
        sc.commands.push(burst(0.2, 0.24, 4));
        sc.commands.push(burst(0.3, 0.34, 4));
        assert_eq!(run(&sc).trip_count(), 0);
    }

    #[test]
    fn power_cycle_recovers_tripped_port() {
        let mut sc = Scenario::quiescent(2.0, 0.001);
        sc.commands.push(burst(0.1, 0.5, 4));
        sc.power_cycles.push(PowerCycle { t: 1.0, port_id: "p".into() });
        let tr = run(&sc);
        assert_eq!(tr.trip_count(), 1);
        let rec: Vec<_> = tr.events_of(EventKind::Recovery).collect();
        assert_eq!(rec.len(), 1);
        assert!((*tr.ports[0].voltage.last().unwrap() - 11.99).abs() < 1e-12);
    }

    #[test]
    fn fuses_clamp_torque_before_simulation() {
        let mut sc = Scenario::quiescent(1.0, 0.001);
        sc.commands.push(burst(0.1, 0.9, 4));
        let cap = crate::fuse::synthesize_fuses(&topology(), &model(), 0).unwrap();
        let opts = SimOptions { fuses: Some(cap), ..SimOptions::default() };
        let tr = simulate(&topology(), &model(), &sc, &opts).unwrap();
        assert_eq!(tr.trip_count(), 0);
        let peak = tr.ports[0].current.iter().cloned().fold(0.0, f64::max);
        assert!(peak <= 10.0 + 1e-9, "{peak}");
    }

    #[test]
    fn trapezoid_energy_on_a_step() {
        // Samples at 0.0..=1.0 by 0.1; 3.7 A on 0.5..0.9, 1 A elsewhere. Four
        // low intervals, four high, and two mixed ones.
        let mut sc = Scenario::quiescent(1.0, 0.1);
        sc.commands.push(burst(0.5, 1.0, 1));
        let tr = run(&sc);
        let lo = 11.99 * 1.0;
        let hi = (12.0 - 0.037) * 3.7;
        let expected = 5.0 * (lo + hi) * 0.1 / 3600.0;
        assert!((tr.total_energy_wh() - expected).abs() < 1e-12, "{} vs {expected}", tr.total_energy_wh());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut sc = Scenario::quiescent(3.0, 0.001);
        sc.commands.push(LoadCommand { period: Some(1.0), ..burst(0.2, 0.6, 2) });
        let opts = SimOptions { seed: Some(42), ..SimOptions::default() };
        let a = simulate(&topology(), &model(), &sc, &opts).unwrap();
        let b = simulate(&topology(), &model(), &sc, &opts).unwrap();
        assert_eq!(a, b);
        let c = simulate(&topology(), &model(), &sc, &SimOptions { seed: Some(43), ..opts }).unwrap();
        assert_ne!(a.ports[0].current, c.ports[0].current);
    }
}
