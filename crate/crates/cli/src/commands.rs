use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};
use serde::Serialize;
use untethered_core::compute::{self, DEFAULT_ACTION_RATES};
use untethered_core::fuse::FuseSetting;
use untethered_core::perception::{render, SyntheticScene};
use untethered_core::sim::{check_budget, PowerBudget, SimTrace};
use untethered_core::stiffness::{self, ProfileReport};
use untethered_core::{
    detect_and_locate, simulate, solve_trajectory, synthesize_fuses, BudgetReport, CameraMount, Config, Detection,
    IkTask, LatencyProfile, LoadModel, RgbdFrame, Scenario, SimOptions, Trajectory,
};

use crate::io::{read_json, CliError, Outputs};
use crate::Ctx;

pub fn validate(ctx: &mut Ctx) -> Result<(), CliError> {
    let (config, _) = ctx.config()?;
    ctx.say(format!(
        "ok: {} actuators, {} ports, {} buses, {} chains",
        config.actuators.len(),
        config.ports.len(),
        config.buses.len(),
        config.chains.len()
    ));
    Ok(())
}

fn model(config: &Config) -> Result<LoadModel, CliError> {
    config.load_model().map_err(|e| CliError::Validation(e.to_string()))
}

pub fn fuses_for(config: &Config, model: &LoadModel, margin: u32) -> Result<Vec<FuseSetting>, CliError> {
    synthesize_fuses(&config.topology(), model, margin).map_err(|e| CliError::stage("fuse", e))
}

#[derive(Serialize)]
struct FuseReport {
    inrush_table: BTreeMap<u32, f64>,
    fuses: Vec<FuseSetting>,
    budget: PowerBudget,
}

pub fn fuse(ctx: &mut Ctx, margin: Option<u32>, out: Option<&Path>) -> Result<(), CliError> {
    let (config, _) = ctx.config()?;
    let model = model(&config)?;
    let fuses = fuses_for(&config, &model, margin.unwrap_or(config.load_model.margin_registers))?;
    let budget = check_budget(&config.topology(), &model, &fuses).map_err(|e| CliError::stage("fuse", e))?;
    for f in &fuses {
        ctx.say(format!(
            "{}: cap {} ({:.3} A of {:.3} A, headroom {:.3} A); configured {} -> {:.3} A",
            f.bus_id, f.torque_cap, f.predicted_load, f.port_limit, f.headroom, f.configured.torque, f.configured.load
        ));
    }
    let report = FuseReport { inrush_table: model.inrush_table.clone(), fuses, budget };
    let path = ctx.out.path(out, "fuses.json");
    ctx.out.write_json(&path, &report)
}

#[derive(Serialize)]
pub struct EnergySummary {
    pub trip_count: usize,
    pub brownout_count: usize,
    pub port_energy_wh: BTreeMap<String, f64>,
    pub total_energy_wh: f64,
    pub average_power_w: f64,
    pub battery_fraction: f64,
}

impl EnergySummary {
    pub fn of(trace: &SimTrace, duration: f64, battery_wh: f64) -> Self {
        let total = trace.total_energy_wh();
        Self {
            trip_count: trace.trip_count(),
            brownout_count: trace.events_of(untethered_core::sim::EventKind::Brownout).count(),
            port_energy_wh: trace
                .ports
                .iter()
                .map(|p| (p.port_id.clone(), p.energy_wh.last().copied().unwrap_or(0.0)))
                .collect(),
            total_energy_wh: total,
            average_power_w: total * 3600.0 / duration,
            battery_fraction: total / battery_wh,
        }
    }
}

#[derive(Serialize)]
pub struct EventsReport<'a> {
    pub events: &'a [untethered_core::sim::SimEvent],
    pub summary: EnergySummary,
}

pub fn write_trace(out: &mut Outputs, path: &Path, trace: &SimTrace) -> Result<(), CliError> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(|e| CliError::stage("output", e))?;
    out.write_bytes(path, &buf)
}

pub fn run_sim(
    config: &Config,
    model: &LoadModel,
    scenario: &Scenario,
    fuses: Option<Vec<FuseSetting>>,
    seed: Option<u64>,
) -> Result<SimTrace, CliError> {
    let options = SimOptions { fuses, seed, settings: config.sim };
    simulate(&config.topology(), model, scenario, &options).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn simulate_cmd(
    ctx: &mut Ctx,
    scenario: &Path,
    apply_fuses: bool,
    no_jitter: bool,
    trace_out: Option<&Path>,
    events_out: Option<&Path>,
) -> Result<(), CliError> {
    let (config, _) = ctx.config()?;
    let model = model(&config)?;
    let scenario: Scenario = read_json(scenario, ctx.global.lenient)?;
    let fuses = if apply_fuses { Some(fuses_for(&config, &model, config.load_model.margin_registers)?) } else { None };
    let seed = (!no_jitter).then_some(ctx.global.seed);
    let trace = run_sim(&config, &model, &scenario, fuses, seed)?;
    let summary = EnergySummary::of(&trace, scenario.duration, config.battery_wh);
    ctx.say(format!(
        "{} steps, {} trips, {} brownouts, {:.4} Wh ({:.2}% of battery, {:.2} W average)",
        trace.times.len(),
        summary.trip_count,
        summary.brownout_count,
        summary.total_energy_wh,
        100.0 * summary.battery_fraction,
        summary.average_power_w
    ));
    let trace_path = ctx.out.path(trace_out, "trace.csv");
    write_trace(&mut ctx.out, &trace_path, &trace)?;
    let events_path = ctx.out.path(events_out, "events.json");
    ctx.out.write_json(&events_path, &EventsReport { events: &trace.events, summary })
}

/// Parses `x,y,z,qw,qx,qy,qz`; the quaternion is normalized.
pub fn parse_target(s: &str) -> Result<Isometry3<f64>, CliError> {
    let bad = |m: &str| CliError::Parse(format!("--target {s:?}: {m}"));
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("expected seven numbers"))?;
    if v.len() != 7 || v.iter().any(|x| !x.is_finite()) {
        return Err(bad("expected seven finite numbers x,y,z,qw,qx,qy,qz"));
    }
    let q = Quaternion::new(v[3], v[4], v[5], v[6]);
    if q.norm() < 1e-9 {
        return Err(bad("quaternion has zero norm"));
    }
    Ok(Isometry3::from_parts(Translation3::new(v[0], v[1], v[2]), UnitQuaternion::from_quaternion(q)))
}

#[derive(Serialize)]
pub struct IkSummary {
    pub chain: String,
    pub termination: untethered_core::kinematics::Termination,
    pub steps: usize,
    pub duration: f64,
    pub final_position_error: f64,
    pub final_rotation_error: f64,
    pub final_q: Vec<f64>,
    pub frozen_joints: Vec<usize>,
    pub held_chains: Vec<String>,
}

impl IkSummary {
    pub fn new(chain: &str, traj: &Trajectory, task: &IkTask, held_chains: Vec<String>) -> Self {
        Self {
            chain: chain.into(),
            termination: traj.termination,
            steps: traj.samples.len() - 1,
            duration: traj.duration(),
            final_position_error: traj.final_position_error,
            final_rotation_error: traj.final_rotation_error,
            final_q: traj.final_q().to_vec(),
            frozen_joints: task.frozen.iter().copied().collect(),
            held_chains,
        }
    }
}

pub fn write_trajectory(out: &mut Outputs, path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(|e| CliError::stage("output", e))?;
    out.write_bytes(path, &buf)
}

pub fn ik(
    ctx: &mut Ctx,
    chain_name: &str,
    target: &str,
    freeze: &[String],
    position_only: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (config, _) = ctx.config()?;
    let target = parse_target(target)?;
    let chain = config
        .chain(chain_name)
        .ok_or_else(|| CliError::Validation(format!("--chain: unknown chain \"{chain_name}\"")))?;
    let mut task = IkTask::new(chain, target, &config.ik);
    if position_only {
        task = task.position_only();
    }
    // Each --freeze names either another chain (kept at home) or a joint of this one.
    let mut held = Vec::new();
    for name in freeze {
        if let Some(j) = chain.joints.iter().position(|j| !j.name.is_empty() && j.name == *name) {
            task.frozen.insert(j);
        } else if name != chain_name && config.chain(name).is_some() {
            held.push(name.clone());
        } else {
            return Err(CliError::Validation(format!(
                "--freeze: \"{name}\" is neither another chain nor a joint of {chain_name}"
            )));
        }
    }
    let traj = solve_trajectory(chain, &chain.home(), &task).map_err(|e| CliError::stage("ik", e))?;
    let path = ctx.out.path(out, "trajectory.csv");
    write_trajectory(&mut ctx.out, &path, &traj)?;
    let summary = IkSummary::new(chain_name, &traj, &task, held);
    let summary_path = ctx.out.path(None, "ik_summary.json");
    ctx.out.write_json(&summary_path, &summary)?;
    ctx.say(format!(
        "{:?} after {} steps: position error {:.3e} m, rotation error {:.3e} rad",
        traj.termination, summary.steps, traj.final_position_error, traj.final_rotation_error
    ));
    if traj.termination != untethered_core::kinematics::Termination::Reached {
        return Err(CliError::stage(
            "ik",
            format!("target not reached ({:?}), position error {:.4} m", traj.termination, traj.final_position_error),
        ));
    }
    Ok(())
}

/// Camera mount with the scene's head overrides applied.
pub fn scene_mount(config: &Config, scene: &SyntheticScene) -> Result<CameraMount, CliError> {
    let cam = config.camera.as_ref().ok_or_else(|| CliError::Validation("camera: section is required".into()))?;
    let mut mount = cam.mount.clone();
    mount.head_pan = scene.head_pan.unwrap_or(mount.head_pan);
    mount.head_tilt = scene.head_tilt.unwrap_or(mount.head_tilt);
    mount.validate("scene").map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(mount)
}

pub fn render_scene(config: &Config, scene: &SyntheticScene, mount: &CameraMount) -> Result<RgbdFrame, CliError> {
    let cam = config.camera.as_ref().ok_or_else(|| CliError::Validation("camera: section is required".into()))?;
    let pose = mount.camera_pose().map_err(|e| CliError::stage("perception", e))?;
    Ok(render(scene, cam.width, cam.height, cam.intrinsics, &pose))
}

#[derive(Serialize)]
pub struct DetectionReport {
    #[serde(flatten)]
    pub detection: Detection,
    /// Grasp target: position plus quaternion `[qw, qx, qy, qz]`.
    pub grasp_position: [f64; 3],
    pub grasp_orientation: [f64; 4],
}

impl DetectionReport {
    pub fn new(detection: Detection, grasp: &Isometry3<f64>) -> Self {
        let q = grasp.rotation;
        Self { detection, grasp_position: grasp.translation.vector.into(), grasp_orientation: [q.w, q.i, q.j, q.k] }
    }
}

pub fn perceive(
    ctx: &mut Ctx,
    frame: Option<&Path>,
    depth: Option<&Path>,
    scene: Option<&Path>,
    label: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (config, _) = ctx.config()?;
    let cam = config.camera.clone().ok_or_else(|| CliError::Validation("camera: section is required".into()))?;
    let (rgbd, mount) = match (frame, depth, scene) {
        (Some(rgb), Some(depth), _) => {
            let f = RgbdFrame::load_png(rgb, depth, cam.intrinsics).map_err(|e| CliError::Parse(e.to_string()))?;
            (f, cam.mount.clone())
        }
        (_, _, Some(scene)) => {
            let scene: SyntheticScene = read_json(scene, ctx.global.lenient)?;
            let mount = scene_mount(&config, &scene)?;
            (render_scene(&config, &scene, &mount)?, mount)
        }
        _ => return Err(CliError::Parse("either --frame with --depth, or --scene, is required".into())),
    };
    let det =
        detect_and_locate(&rgbd, &config.hsv_labels, &mount, label).map_err(|e| CliError::stage("perception", e))?;
    let grasp = det.grasp_pose(cam.grasp_rpy);
    let p = det.point_base;
    ctx.say(format!("{label}: {} px at base ({:.4}, {:.4}, {:.4}) m", det.area, p[0], p[1], p[2]));
    let path = ctx.out.path(out, "detection.json");
    ctx.out.write_json(&path, &DetectionReport::new(det, &grasp))
}

#[derive(Serialize)]
struct BudgetOutput {
    latency: Vec<BudgetReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power: Option<PowerBudget>,
}

pub fn budget(
    ctx: &mut Ctx,
    profiles: Option<&Path>,
    rates: Option<&[f64]>,
    sigmas: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let profiles: Vec<LatencyProfile> = match profiles {
        Some(p) => read_json(p, ctx.global.lenient)?,
        None => compute::reference_profiles(),
    };
    let rates = rates.unwrap_or(&DEFAULT_ACTION_RATES);
    if rates.iter().any(|r| r.is_nan() || *r <= 0.0) {
        return Err(CliError::Validation("--action-rate: rates must be > 0".into()));
    }
    if sigmas.is_nan() || sigmas < 0.0 {
        return Err(CliError::Validation("--sigmas: must be >= 0".into()));
    }
    let latency = profiles
        .iter()
        .map(|p| compute::budget_report(p, rates, sigmas))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    for r in &latency {
        ctx.say(format!(
            "{}: {:.1} Hz replanning, up to {:.1} actions/s",
            r.model_name, r.f_replan_display, r.max_sustainable_action_rate
        ));
    }
    let power = match ctx.global.config.is_some() {
        true => {
            let (config, _) = ctx.config()?;
            let model = model(&config)?;
            let fuses = fuses_for(&config, &model, config.load_model.margin_registers)?;
            let b = check_budget(&config.topology(), &model, &fuses).map_err(|e| CliError::stage("budget", e))?;
            ctx.say(format!(
                "power: {:.1} W actuator envelope + {:.1} W compute of {:.1} W PDU",
                b.actuator_envelope_w, b.compute_peak_w, b.pdu_rating_w
            ));
            Some(b)
        }
        false => None,
    };
    let path = ctx.out.path(out, "budget.json");
    ctx.out.write_json(&path, &BudgetOutput { latency, power })
}

pub fn stiffness_cmd(ctx: &mut Ctx, stall_torque: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let config = match ctx.global.config.is_some() {
        true => Some(ctx.config()?.0),
        false => None,
    };
    let profiles = match &config {
        Some(c) if !c.link_profiles.is_empty() => c.link_profiles.clone(),
        _ => stiffness::reference_profiles(),
    };
    let stall = match (stall_torque, &config) {
        (Some(t), _) => t,
        (None, Some(c)) if !c.actuators.is_empty() => c.actuators[0].stall_torque(),
        _ => untethered_core::ActuatorSpec::sts3215("reference").stall_torque(),
    };
    let rows: Vec<ProfileReport> =
        stiffness::report(&profiles, stall).map_err(|e| CliError::Validation(e.to_string()))?;
    for r in &rows {
        ctx.say(format!(
            "{}: k = {:.1} N/m, k/m = {:.0} N/m/kg, payload <= {:.1} N",
            r.name, r.stiffness, r.stiffness_per_mass, r.payload_bound
        ));
    }
    let path = ctx.out.path(out, "stiffness.json");
    ctx.out.write_json(&path, &rows)
}
