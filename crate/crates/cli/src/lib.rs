//! The `untethered` command line: config loading, subcommands and run manifests.

pub mod args;
mod commands;
pub mod io;
mod pipeline;

use std::time::{SystemTime, UNIX_EPOCH};

use untethered_core::Config;

pub use args::Cli;
use args::{Command, GlobalArgs};
pub use io::CliError;
use io::{config_hash, read_config, write_manifest, Outputs, RunManifest};

/// Per-run state shared by the subcommands.
pub struct Ctx {
    pub global: GlobalArgs,
    pub out: Outputs,
    config_bytes: Option<Vec<u8>>,
}

impl Ctx {
    /// Loads and validates the `--config` file, remembering its bytes for the manifest.
    pub fn config(&mut self) -> Result<(Config, Vec<u8>), CliError> {
        let (config, bytes) = read_config(self.global.config.as_deref(), self.global.lenient)?;
        self.config_bytes = Some(bytes.clone());
        Ok((config, bytes))
    }

    pub fn say(&self, line: impl AsRef<str>) {
        if !self.global.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Validate => "validate",
        Command::Fuse { .. } => "fuse",
        Command::Simulate { .. } => "simulate",
        Command::Ik { .. } => "ik",
        Command::Perceive { .. } => "perceive",
        Command::Budget { .. } => "budget",
        Command::Stiffness { .. } => "stiffness",
        Command::Scenario { .. } => "scenario",
    }
}

fn dispatch(ctx: &mut Ctx, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Validate => commands::validate(ctx),
        Command::Fuse { margin, out } => commands::fuse(ctx, *margin, out.as_deref()),
        Command::Simulate { scenario, apply_fuses, no_jitter, trace, events } => {
            commands::simulate_cmd(ctx, scenario, *apply_fuses, *no_jitter, trace.as_deref(), events.as_deref())
        }
        Command::Ik { chain, target, freeze, position_only, out } => {
            commands::ik(ctx, chain, target, freeze, *position_only, out.as_deref())
        }
        Command::Perceive { frame, depth, scene, label, out } => {
            commands::perceive(ctx, frame.as_deref(), depth.as_deref(), scene.as_deref(), label, out.as_deref())
        }
        Command::Budget { profiles, rates, sigmas, out } => {
            commands::budget(ctx, profiles.as_deref(), rates.as_deref(), *sigmas, out.as_deref())
        }
        Command::Stiffness { stall_torque, out } => commands::stiffness_cmd(ctx, *stall_torque, out.as_deref()),
        Command::Scenario { scene, label, chain, no_fuses, gripper } => {
            pipeline::scenario(ctx, scene, label, chain.as_deref(), *no_fuses, *gripper)
        }
    }
}

/// Runs one parsed command and writes its manifest, even on failure.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let out = Outputs::new(&cli.global.out_dir)?;
    let out_dir = cli.global.out_dir.clone();
    let seed = cli.global.seed;
    let mut ctx = Ctx { global: cli.global, out, config_bytes: None };
    let result = dispatch(&mut ctx, &cli.command);
    let manifest = RunManifest {
        command: name(&cli.command).into(),
        config_hash: config_hash(ctx.config_bytes.as_deref()),
        seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        outputs: ctx.out.into_files(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write_manifest(&out_dir, &manifest)?;
    result
}
