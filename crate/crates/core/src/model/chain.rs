use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::ValidationError;

/// Rigid transform as translation (meters) plus roll-pitch-yaw (radians,
/// applied as fixed-axis X then Y then Z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Transform {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Transform {
    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self { xyz: [x, y, z], rpy: [0.0; 3] }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rpy;
        Isometry3::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    #[default]
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub kind: JointKind,
    /// Unit axis in the joint frame.
    pub axis: [f64; 3],
    /// Pose of the joint frame in the parent frame.
    pub origin: Transform,
    pub limit_lo: f64,
    pub limit_hi: f64,
    /// Radians (or meters) per second.
    pub vel_limit: f64,
}

impl Joint {
    pub fn axis_unit(&self) -> Unit<Vector3<f64>> {
        Unit::new_unchecked(Vector3::from(self.axis))
    }

    /// Motion contributed by this joint at position `q`.
    pub fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.kind {
            JointKind::Revolute => {
                Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&self.axis_unit(), q))
            }
            JointKind::Prismatic => {
                Isometry3::from_parts(Translation3::from(Vector3::from(self.axis) * q), UnitQuaternion::identity())
            }
        }
    }
}

/// Serial chain of single-DoF joints ending in a fixed tool offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub joints: Vec<Joint>,
    #[serde(default)]
    pub end_effector_offset: Transform,
    /// Bus carrying this chain's actuators, when the chain is powered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus_id: Option<String>,
    /// Joint indices left out of IK unless explicitly unfrozen (grippers, base DoFs).
    #[serde(default)]
    pub ik_exclude: Vec<usize>,
    /// Home configuration; defaults to the midpoint of each joint range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Vec<f64>>,
}

/// Slack allowed when checking a configuration against joint limits.
pub const LIMIT_EPS: f64 = 1e-12;

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn home(&self) -> Vec<f64> {
        self.home.clone().unwrap_or_else(|| {
            self.joints
                .iter()
                .map(|j| if j.limit_lo <= 0.0 && 0.0 <= j.limit_hi { 0.0 } else { 0.5 * (j.limit_lo + j.limit_hi) })
                .collect()
        })
    }

    /// Returns the first joint index whose value lies outside its limits.
    pub fn limit_violation(&self, q: &[f64]) -> Option<usize> {
        self.joints.iter().zip(q).position(|(j, &v)| !(v >= j.limit_lo - LIMIT_EPS && v <= j.limit_hi + LIMIT_EPS))
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limit_lo, j.limit_hi);
        }
    }

    /// Sum of link translations after the first joint plus the tool offset:
    /// an upper bound on the distance from joint 1's frame to the tool.
    pub fn reach_from(&self, joint: usize) -> f64 {
        self.joints[joint + 1..].iter().map(|j| Vector3::from(j.origin.xyz).norm()).sum::<f64>()
            + Vector3::from(self.end_effector_offset.xyz).norm()
    }

    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        if self.joints.is_empty() {
            return Err(ValidationError::new(format!("{field}.joints"), "chain needs at least one joint"));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let f = |sub: &str| format!("{field}.joints[{i}].{sub}");
            let norm = Vector3::from(j.axis).norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(ValidationError::new(f("axis"), format!("must be unit length, norm is {norm}")));
            }
            if !(j.limit_lo < j.limit_hi) {
                return Err(ValidationError::new(
                    f("limit_lo"),
                    format!("limit_lo {} must be below limit_hi {}", j.limit_lo, j.limit_hi),
                ));
            }
            if !(j.vel_limit > 0.0) {
                return Err(ValidationError::new(f("vel_limit"), format!("must be > 0, got {}", j.vel_limit)));
            }
        }
        if let Some(&bad) = self.ik_exclude.iter().find(|&&i| i >= self.dof()) {
            return Err(ValidationError::new(
                format!("{field}.ik_exclude"),
                format!("joint index {bad} out of range for {} joints", self.dof()),
            ));
        }
        if let Some(home) = &self.home {
            if home.len() != self.dof() {
                return Err(ValidationError::new(
                    format!("{field}.home"),
                    format!("expected {} values, got {}", self.dof(), home.len()),
                ));
            }
            if let Some(i) = self.limit_violation(home) {
                return Err(ValidationError::new(
                    format!("{field}.home"),
                    format!("joint {i} value {} outside limits", home[i]),
                ));
            }
        }
        Ok(())
    }
}
