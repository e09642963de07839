use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ActuatorSpec, BusConfig, ComputeLoad, KinematicChain, PduPort, PowerTopology, ValidationError};
use crate::fuse::{LoadModel, LoadModelConfig};
use crate::kinematics::IkDefaults;
use crate::perception::{CameraMount, HsvRange, Intrinsics};
use crate::sim::SimSettings;
use crate::stiffness::LinkProfile;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("validation error: {0}")]
    Validation(#[from] ValidationError),
}

/// Camera intrinsics, image size, and head mount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    pub mount: CameraMount,
    /// Tool roll, pitch, yaw relative to the target bearing, used when turning
    /// a detection into a grasp target.
    #[serde(default = "default_grasp_rpy")]
    pub grasp_rpy: [f64; 3],
}

fn default_grasp_rpy() -> [f64; 3] {
    [0.0, std::f64::consts::FRAC_PI_4, 0.0]
}

/// The whole scenario file: power, kinematics, and perception calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub actuators: Vec<ActuatorSpec>,
    pub ports: Vec<PduPort>,
    pub buses: Vec<BusConfig>,
    #[serde(default)]
    pub compute_loads: Vec<ComputeLoad>,
    pub battery_wh: f64,
    #[serde(default = "default_pdu_power")]
    pub pdu_power_w: f64,
    #[serde(default)]
    pub load_model: LoadModelConfig,
    #[serde(default)]
    pub chains: BTreeMap<String, KinematicChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraConfig>,
    #[serde(default)]
    pub hsv_labels: Vec<HsvRange>,
    #[serde(default)]
    pub ik: IkDefaults,
    #[serde(default)]
    pub link_profiles: Vec<LinkProfile>,
    #[serde(default)]
    pub sim: SimSettings,
}

fn default_pdu_power() -> f64 {
    300.0
}

impl Config {
    pub fn topology(&self) -> PowerTopology {
        PowerTopology {
            actuators: self.actuators.clone(),
            ports: self.ports.clone(),
            buses: self.buses.clone(),
            compute_loads: self.compute_loads.clone(),
            battery_capacity: self.battery_wh,
            pdu_power: self.pdu_power_w,
        }
    }

    /// Load model built from the (homogeneous) actuator set and the inrush
    /// calibration section.
    pub fn load_model(&self) -> Result<LoadModel, ValidationError> {
        let first = self
            .actuators
            .first()
            .ok_or_else(|| ValidationError::new("actuators", "at least one actuator is required"))?;
        self.load_model.build(first.no_load_current, first.current_slope)
    }

    pub fn chain(&self, name: &str) -> Option<&KinematicChain> {
        self.chains.get(name)
    }

    pub fn hsv_range(&self, label: &str) -> Option<&HsvRange> {
        self.hsv_labels.iter().find(|r| r.label == label)
    }

    /// Checks every cross-module invariant. The first violation wins.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let topology = self.topology();
        topology.validate()?;
        if let Some(first) = self.actuators.first() {
            for (i, a) in self.actuators.iter().enumerate().skip(1) {
                if a.no_load_current != first.no_load_current || a.current_slope != first.current_slope {
                    return Err(ValidationError::new(
                        format!("actuators[{i}]"),
                        "all actuators must share no_load_current and current_slope",
                    ));
                }
            }
        }
        let model = self.load_model()?;
        for (i, b) in self.buses.iter().enumerate() {
            if model.inrush(b.accel_setting).is_err() {
                return Err(ValidationError::new(
                    format!("buses[{i}].accel_setting"),
                    format!("no inrush entry for accel register {}", b.accel_setting),
                ));
            }
        }
        for (name, chain) in &self.chains {
            chain.validate(&format!("chains.{name}"))?;
            if let Some(bus) = &chain.bus_id {
                if topology.bus(bus).is_none() {
                    return Err(ValidationError::new(
                        format!("chains.{name}.bus_id"),
                        format!("unknown bus \"{bus}\""),
                    ));
                }
            }
        }
        if let Some(cam) = &self.camera {
            if cam.width == 0 || cam.height == 0 {
                return Err(ValidationError::new("camera.width", "image size must be non-zero"));
            }
            cam.intrinsics.validate("camera.intrinsics")?;
            cam.mount.validate("camera.mount")?;
        }
        let mut labels = BTreeSet::new();
        for (i, r) in self.hsv_labels.iter().enumerate() {
            if !labels.insert(r.label.as_str()) {
                return Err(ValidationError::new(
                    format!("hsv_labels[{i}].label"),
                    format!("duplicate label \"{}\"", r.label),
                ));
            }
            r.validate(&format!("hsv_labels[{i}]"))?;
        }
        self.ik.validate("ik")?;
        for (i, p) in self.link_profiles.iter().enumerate() {
            p.validate(&format!("link_profiles[{i}]"))?;
        }
        self.sim.validate("sim")?;
        Ok(())
    }
}

/// Renders an ignored-key path as `ports[0].colour`.
pub fn key_path(path: &serde_ignored::Path<'_>) -> String {
    use serde_ignored::Path as P;
    match path {
        P::Root => String::new(),
        P::Seq { parent, index } => format!("{}[{index}]", key_path(parent)),
        P::Map { parent, key } => match key_path(parent) {
            p if p.is_empty() => key.to_string(),
            p => format!("{p}.{key}"),
        },
        P::Some { parent } | P::NewtypeStruct { parent } | P::NewtypeVariant { parent } => key_path(parent),
    }
}

/// Parses and validates a config document. In strict mode any key the schema
/// does not know is an error.
pub fn parse_config(text: &str, lenient: bool) -> Result<Config, ConfigError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let config: Config = serde_ignored::deserialize(&mut de, |path| unknown.push(key_path(&path)))
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    de.end().map_err(|e| ConfigError::Parse(e.to_string()))?;
    if !lenient && !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>, lenient: bool) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, lenient)
}

/// Loads a config file and returns its validated power topology.
pub fn load_topology(path: impl AsRef<Path>) -> Result<PowerTopology, ConfigError> {
    Ok(load_config(path, false)?.topology())
}
