//! `scenario`: render, detect, solve IK, derive bus loads, simulate.

use std::path::Path;

use serde::Serialize;
use untethered_core::fuse::FuseSetting;
use untethered_core::kinematics::{Termination, TimedCommand};
use untethered_core::perception::SyntheticScene;
use untethered_core::sim::{ComputeWindow, LoadCommand};
use untethered_core::{detect_and_locate, gripper_close, solve_trajectory, Config, IkTask, KinematicChain, Scenario};

use crate::args::GripperArgs;
use crate::commands::{
    fuses_for, render_scene, run_sim, scene_mount, write_trace, write_trajectory, DetectionReport, EnergySummary,
    EventsReport, IkSummary,
};
use crate::io::{read_json, CliError};
use crate::Ctx;

/// Simulation step for the derived load scenario.
const SIM_DT: f64 = 1e-3;
/// Quiet time simulated after the last command.
const SETTLE: f64 = 0.5;

#[derive(Debug, Serialize)]
struct CommandPlan {
    motion_duration: f64,
    gripper: Vec<TimedCommand>,
    loads: Vec<LoadCommand>,
}

#[derive(Serialize)]
struct ScenarioSummary {
    label: String,
    chain: String,
    ik: IkSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    fuses: Option<Vec<FuseSetting>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power: Option<EnergySummary>,
}

fn pick_chain<'a>(config: &'a Config, name: Option<&str>) -> Result<(String, &'a KinematicChain), CliError> {
    match name {
        Some(n) => config
            .chain(n)
            .map(|c| (n.to_string(), c))
            .ok_or_else(|| CliError::Validation(format!("--chain: unknown chain \"{n}\""))),
        None => config
            .chains
            .iter()
            .find(|(_, c)| c.bus_id.is_some())
            .map(|(n, c)| (n.clone(), c))
            .ok_or_else(|| CliError::Validation("chains: no chain is assigned to a bus".into())),
    }
}

/// Torque envelope of the motion: every bus loaded at its configured register
/// for the whole trajectory, then one servo on the chain's bus for the
/// gripper closure.
fn derive_loads(
    config: &Config,
    chain: &KinematicChain,
    motion: f64,
    gripper: &[TimedCommand],
    dwell: f64,
) -> Vec<LoadCommand> {
    let mut loads: Vec<LoadCommand> = config
        .buses
        .iter()
        .filter(|_| motion > 0.0)
        .map(|b| LoadCommand {
            t_start: 0.0,
            t_end: motion,
            bus_id: b.id.clone(),
            n_active: b.active_count,
            tau: b.torque_cap,
            alpha: b.accel_setting,
            period: None,
        })
        .collect();
    if let (Some(bus_id), Some(last)) = (&chain.bus_id, gripper.last()) {
        let bus = config.buses.iter().find(|b| &b.id == bus_id).expect("validated bus");
        loads.push(LoadCommand {
            t_start: motion,
            t_end: motion + last.t + dwell,
            bus_id: bus.id.clone(),
            n_active: 1,
            tau: bus.torque_cap,
            alpha: bus.accel_setting,
            period: None,
        });
    }
    loads
}

pub fn scenario(
    ctx: &mut Ctx,
    scene_path: &Path,
    label: &str,
    chain_name: Option<&str>,
    no_fuses: bool,
    grip: GripperArgs,
) -> Result<(), CliError> {
    let (config, _) = ctx.config()?;
    let cam = config.camera.clone().ok_or_else(|| CliError::Validation("camera: section is required".into()))?;
    let (chain_name, chain) = pick_chain(&config, chain_name)?;
    let scene: SyntheticScene = read_json(scene_path, ctx.global.lenient)?;

    let mount = scene_mount(&config, &scene)?;
    let frame = render_scene(&config, &scene, &mount)?;
    let det =
        detect_and_locate(&frame, &config.hsv_labels, &mount, label).map_err(|e| CliError::stage("perception", e))?;
    let grasp = det.grasp_pose(cam.grasp_rpy);
    let p = det.point_base;
    ctx.say(format!("perception: {label} at ({:.4}, {:.4}, {:.4}) m, {} px", p[0], p[1], p[2], det.area));
    let det_path = ctx.out.path(None, "detection.json");
    ctx.out.write_json(&det_path, &DetectionReport::new(det, &grasp))?;

    let task = IkTask::new(chain, grasp, &config.ik);
    let traj = solve_trajectory(chain, &chain.home(), &task).map_err(|e| CliError::stage("ik", e))?;
    let traj_path = ctx.out.path(None, "trajectory.csv");
    write_trajectory(&mut ctx.out, &traj_path, &traj)?;
    let ik = IkSummary::new(&chain_name, &traj, &task, Vec::new());
    ctx.say(format!(
        "ik: {:?} after {} steps, position error {:.3e} m, rotation error {:.3e} rad",
        traj.termination, ik.steps, traj.final_position_error, traj.final_rotation_error
    ));
    let mut summary = ScenarioSummary { label: label.into(), chain: chain_name.clone(), ik, fuses: None, power: None };
    let summary_path = ctx.out.path(None, "summary.json");
    if traj.termination != Termination::Reached {
        ctx.out.write_json(&summary_path, &summary)?;
        return Err(CliError::stage(
            "ik",
            format!(
                "{} (position error {:.4} m after {} steps)",
                serde_json::to_value(traj.termination).expect("enum").as_str().unwrap_or("unreached"),
                traj.final_position_error,
                summary.ik.steps
            ),
        ));
    }

    let gripper = gripper_close(grip.grip_open, grip.grip_closed, grip.grip_step, grip.grip_dwell)
        .map_err(|e| CliError::Validation(format!("--grip-step: {e}")))?;
    let motion = traj.duration();
    let loads = derive_loads(&config, chain, motion, &gripper, grip.grip_dwell);
    let end = loads.iter().map(|c| c.t_end).fold(motion, f64::max);
    let duration = ((end + SETTLE) / SIM_DT).ceil() * SIM_DT;
    let plan = CommandPlan { motion_duration: motion, gripper, loads };
    let cmd_path = ctx.out.path(None, "commands.json");
    ctx.out.write_json(&cmd_path, &plan)?;

    let model = config.load_model().map_err(|e| CliError::Validation(e.to_string()))?;
    let fuses = if no_fuses { None } else { Some(fuses_for(&config, &model, config.load_model.margin_registers)?) };
    let sc = Scenario {
        duration,
        dt: SIM_DT,
        commands: plan.loads,
        compute_profile: config
            .compute_loads
            .iter()
            .filter_map(|c| {
                c.peak_watts.map(|w| ComputeWindow {
                    t_start: 0.0,
                    t_end: duration,
                    watts: w,
                    load: Some(c.name.clone()),
                })
            })
            .collect(),
        power_cycles: Vec::new(),
    };
    let trace =
        run_sim(&config, &model, &sc, fuses.clone(), Some(ctx.global.seed)).map_err(|e| CliError::stage("power", e))?;
    let trace_path = ctx.out.path(None, "trace.csv");
    write_trace(&mut ctx.out, &trace_path, &trace)?;
    let energy = EnergySummary::of(&trace, duration, config.battery_wh);
    let trips = energy.trip_count;
    let events_path = ctx.out.path(None, "events.json");
    ctx.out.write_json(
        &events_path,
        &EventsReport { events: &trace.events, summary: EnergySummary::of(&trace, duration, config.battery_wh) },
    )?;
    ctx.say(format!("power: {trips} trips over {duration:.3} s, {:.5} Wh", energy.total_energy_wh));
    summary.fuses = fuses;
    summary.power = Some(energy);
    ctx.out.write_json(&summary_path, &summary)?;
    if trips > 0 {
        let first = &trace.events.iter().find(|e| e.kind == untethered_core::sim::EventKind::Trip).expect("trip");
        return Err(CliError::stage(
            "power",
            format!("{trips} trip events; first on {} at t = {:.3} s", first.port_id, first.t),
        ));
    }
    Ok(())
}
