//! Benchmark fixtures built from the shipped reference files.

use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use untethered_core::perception::SyntheticScene;
use untethered_core::{parse_config, Config, RgbdFrame, Scenario};

pub fn reference_config() -> Config {
    parse_config(include_str!("../../../configs/tribus.json"), false).expect("reference config")
}

pub fn stress_scenario() -> Scenario {
    serde_json::from_str(include_str!("../../../configs/scenarios/stress_60s.json")).expect("stress scenario")
}

pub fn red_cube_scene() -> SyntheticScene {
    serde_json::from_str(include_str!("../../../configs/scenes/red_cube.json")).expect("red cube scene")
}

/// The red cube scene rendered from the configured head pose.
pub fn red_cube_frame(config: &Config) -> RgbdFrame {
    let cam = config.camera.as_ref().expect("camera section");
    let pose = cam.mount.camera_pose().expect("camera pose");
    untethered_core::perception::render(&red_cube_scene(), cam.width, cam.height, cam.intrinsics, &pose)
}

/// A reachable position target in front of the left arm.
pub fn reach_target() -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(0.25, 0.0, 0.15), UnitQuaternion::identity())
}
