//! Executable systems models for a low-cost untethered mobile manipulator:
//! servo current budgeting and firmware torque caps, PDU port transients,
//! differential IK, RGB-D blob localization, link stiffness, and inference
//! replanning budgets.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compute;
pub mod fuse;
pub mod kinematics;
pub mod model;
pub mod perception;
pub mod sim;
pub mod stiffness;

pub use compute::{budget_report, replan_frequency, schedule_feasibility, BudgetReport, LatencyProfile};
pub use fuse::{bus_load, calibrate_inrush, max_torque, synthesize_fuses, FuseError, FuseSetting, LoadModel};
pub use kinematics::{fk, gripper_close, ik_step, jacobian, solve_trajectory, IkTask, KinematicsError, Trajectory};
pub use model::{
    load_config, parse_config, ActuatorSpec, BusConfig, ComputeLoad, Config, ConfigError, KinematicChain, PduPort,
    PowerTopology, ValidationError,
};
pub use perception::{detect_and_locate, CameraMount, Detection, HsvRange, Intrinsics, PerceptionError, RgbdFrame};
pub use sim::{simulate, Scenario, SimError, SimOptions, SimTrace};
pub use stiffness::{LinkProfile, StiffnessError};
