use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "untethered",
    version,
    about = "Power, kinematics and perception models for an untethered mobile manipulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Robot config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for simulation phase jitter.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Ignore unknown keys in input documents.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Suppress the human-readable summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config against every model invariant.
    Validate,
    /// Synthesize per-bus torque caps from the port limits.
    Fuse {
        /// Extra registers subtracted from every cap.
        #[arg(long)]
        margin: Option<u32>,
        /// Output file; a default name inside --out-dir when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a load scenario through the port model.
    Simulate {
        /// Load scenario (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Clamp command torques to the synthesized caps.
        #[arg(long)]
        apply_fuses: bool,
        /// Skip phase jitter even though a seed is set.
        #[arg(long)]
        no_jitter: bool,
        /// Trace CSV path; trace.csv inside --out-dir when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Events JSON path; events.json inside --out-dir when omitted.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Solve a differential IK trajectory toward a target pose.
    Ik {
        /// Chain name from the config.
        #[arg(long)]
        chain: String,
        /// "x,y,z,qw,qx,qy,qz" in the chain base frame.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        /// Joint to hold at its start value, or another chain to hold at home. Repeatable.
        #[arg(long)]
        freeze: Vec<String>,
        /// Track position only.
        #[arg(long)]
        position_only: bool,
        /// Output file; a default name inside --out-dir when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate a colored target in an RGB-D frame or a synthetic scene.
    Perceive {
        /// 8-bit color PNG.
        #[arg(long, requires = "depth", conflicts_with = "scene")]
        frame: Option<PathBuf>,
        /// 16-bit depth PNG in millimeters.
        #[arg(long, requires = "frame")]
        depth: Option<PathBuf>,
        /// Synthetic scene (JSON) rendered through the configured camera.
        #[arg(long, required_unless_present = "frame")]
        scene: Option<PathBuf>,
        /// Color label from the config's HSV ranges.
        #[arg(long)]
        label: String,
        /// Output file; a default name inside --out-dir when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replanning-frequency and power budget report.
    Budget {
        /// Latency profiles (JSON list); the benchmarked set when omitted.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Comma-separated action rates in hertz.
        #[arg(long = "action-rate", alias = "rates", value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Latency standard deviations added to the mean.
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
        /// Output file; a default name inside --out-dir when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Link stiffness, stored energy and payload bounds.
    Stiffness {
        /// Joint stall torque in N*m; the actuator rating when omitted.
        #[arg(long)]
        stall_torque: Option<f64>,
        /// Output file; a default name inside --out-dir when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perception, IK and power simulation chained on one scene.
    Scenario {
        /// Synthetic scene (JSON).
        #[arg(long)]
        scene: PathBuf,
        /// Color label of the grasp target.
        #[arg(long, default_value = "red")]
        label: String,
        /// Chain that performs the grasp; the first powered chain when omitted.
        #[arg(long)]
        chain: Option<String>,
        /// Simulate the configured torques without firmware caps.
        #[arg(long)]
        no_fuses: bool,
        #[command(flatten)]
        gripper: GripperArgs,
    },
}

#[derive(Debug, Args, Clone, Copy)]
pub struct GripperArgs {
    /// Gripper position at the start of closure, radians.
    #[arg(long, default_value_t = 1.0)]
    pub grip_open: f64,
    /// Gripper position at the end of closure, radians.
    #[arg(long, default_value_t = 0.0)]
    pub grip_closed: f64,
    /// Position change per gripper command, radians.
    #[arg(long, default_value_t = 0.1)]
    pub grip_step: f64,
    /// Seconds between gripper commands.
    #[arg(long, default_value_t = 0.05)]
    pub grip_dwell: f64,
}
