//! Forward kinematics, geometric Jacobians, and QP-based differential IK.

mod gripper;
mod ik;
mod qp;

use nalgebra::{DMatrix, Isometry3, Vector3};

pub use gripper::{gripper_close, TimedCommand};
pub use ik::{frame_error, ik_step, solve_trajectory, IkDefaults, IkStep, IkTask, Termination, Trajectory};
pub use qp::{solve_box_qp, BoxQp, QpSolution};

use crate::model::{JointKind, KinematicChain};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint {joint} value {value} outside [{lo}, {hi}]")]
    LimitViolation { joint: usize, value: f64, lo: f64, hi: f64 },
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("degenerate problem: Hessian is singular with zero posture weight")]
    Degenerate,
    #[error("QP stationarity residual {0:e} exceeds tolerance")]
    KktResidual(f64),
    #[error("gripper step must be > 0, got {0}")]
    NonPositiveStep(f64),
}

pub(crate) fn check_q(chain: &KinematicChain, q: &[f64]) -> Result<(), KinematicsError> {
    if q.len() != chain.dof() {
        return Err(KinematicsError::DimensionMismatch { expected: chain.dof(), got: q.len() });
    }
    if let Some(i) = chain.limit_violation(q) {
        let j = &chain.joints[i];
        return Err(KinematicsError::LimitViolation { joint: i, value: q[i], lo: j.limit_lo, hi: j.limit_hi });
    }
    Ok(())
}

/// Base-frame pose of every joint frame (before the joint's own motion),
/// followed by the end-effector pose.
pub fn joint_frames(
    chain: &KinematicChain,
    q: &[f64],
) -> Result<(Vec<Isometry3<f64>>, Isometry3<f64>), KinematicsError> {
    check_q(chain, q)?;
    let mut pose = Isometry3::identity();
    let mut frames = Vec::with_capacity(chain.dof());
    for (joint, &v) in chain.joints.iter().zip(q) {
        pose *= joint.origin.to_isometry();
        frames.push(pose);
        pose *= joint.motion(v);
    }
    pose *= chain.end_effector_offset.to_isometry();
    Ok((frames, pose))
}

/// End-effector pose in the chain base frame.
pub fn fk(chain: &KinematicChain, q: &[f64]) -> Result<Isometry3<f64>, KinematicsError> {
    joint_frames(chain, q).map(|(_, ee)| ee)
}

/// 6 x n geometric Jacobian, linear rows first, in the base frame.
pub fn jacobian(chain: &KinematicChain, q: &[f64]) -> Result<DMatrix<f64>, KinematicsError> {
    let (frames, ee) = joint_frames(chain, q)?;
    let p_e = ee.translation.vector;
    let mut jac = DMatrix::zeros(6, chain.dof());
    for (i, (joint, frame)) in chain.joints.iter().zip(&frames).enumerate() {
        let z: Vector3<f64> = frame.rotation * Vector3::from(joint.axis);
        let (lin, ang) = match joint.kind {
            JointKind::Revolute => (z.cross(&(p_e - frame.translation.vector)), z),
            JointKind::Prismatic => (z, Vector3::zeros()),
        };
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
    }
    Ok(jac)
}

/// Jacobian with the columns of `frozen` joints zeroed.
pub fn jacobian_masked(
    chain: &KinematicChain,
    q: &[f64],
    frozen: &std::collections::BTreeSet<usize>,
) -> Result<DMatrix<f64>, KinematicsError> {
    let mut jac = jacobian(chain, q)?;
    for &i in frozen.iter().filter(|&&i| i < chain.dof()) {
        jac.column_mut(i).fill(0.0);
    }
    Ok(jac)
}

#[cfg(test)]
pub(crate) mod test_chains {
    use crate::model::{Joint, JointKind, KinematicChain, Transform};

    pub fn revolute(axis: [f64; 3], origin: [f64; 3], lim: f64) -> Joint {
        Joint {
            name: String::new(),
            kind: JointKind::Revolute,
            axis,
            origin: Transform::translation(origin[0], origin[1], origin[2]),
            limit_lo: -lim,
            limit_hi: lim,
            vel_limit: 3.0,
        }
    }

    /// Planar 2R arm in the xy-plane with link lengths `l1`, `l2`.
    pub fn planar_2r(l1: f64, l2: f64) -> KinematicChain {
        KinematicChain {
            joints: vec![revolute([0.0, 0.0, 1.0], [0.0; 3], 3.0), revolute([0.0, 0.0, 1.0], [l1, 0.0, 0.0], 3.0)],
            end_effector_offset: Transform::translation(l2, 0.0, 0.0),
            bus_id: None,
            ik_exclude: vec![],
            home: None,
        }
    }

    /// Spatial 3R arm: yaw then two pitch joints.
    pub fn spatial_3r() -> KinematicChain {
        KinematicChain {
            joints: vec![
                revolute([0.0, 0.0, 1.0], [0.0, 0.0, 0.1], 2.5),
                revolute([0.0, 1.0, 0.0], [0.02, 0.0, 0.05], 2.0),
                revolute([0.0, 1.0, 0.0], [0.0, 0.0, 0.12], 2.0),
            ],
            end_effector_offset: Transform::translation(0.15, 0.0, 0.0),
            bus_id: None,
            ik_exclude: vec![],
            home: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_chains::*;
    use super::*;
    use crate::model::Transform;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn_single_joint() {
        let mut chain = planar_2r(0.3, 0.0);
        chain.joints.truncate(1);
        chain.end_effector_offset = Transform::translation(0.3, 0.0, 0.0);
        let p = fk(&chain, &[FRAC_PI_2]).unwrap().translation.vector;
        assert!((p - Vector3::new(0.0, 0.3, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn planar_jacobian_matches_closed_form() {
        let (l1, l2) = (0.3, 0.2);
        let chain = planar_2r(l1, l2);
        for &(a, b) in &[(0.3, -0.7), (1.2, 0.4), (-2.0, 2.5)] {
            let j = jacobian(&chain, &[a, b]).unwrap();
            let (s1, c1, s12, c12) = (f64::sin(a), f64::cos(a), f64::sin(a + b), f64::cos(a + b));
            let expected = [[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]];
            for r in 0..2 {
                for c in 0..2 {
                    assert!((j[(r, c)] - expected[r][c]).abs() < 1e-12);
                }
            }
            assert!(j.row(2).iter().all(|v| v.abs() < 1e-12));
            assert_eq!(j[(5, 0)], 1.0);
            assert_eq!(j[(5, 1)], 1.0);
        }
    }

    #[test]
    fn masked_columns_are_zero() {
        let chain = spatial_3r();
        let frozen = [1usize].into_iter().collect();
        let j = jacobian_masked(&chain, &[0.1, 0.2, 0.3], &frozen).unwrap();
        assert!(j.column(1).iter().all(|&v| v == 0.0));
        assert!(j.column(0).norm() > 0.0);
    }

    #[test]
    fn fk_rejects_limit_violation_and_bad_length() {
        let chain = spatial_3r();
        assert!(matches!(fk(&chain, &[0.0, 2.1, 0.0]), Err(KinematicsError::LimitViolation { joint: 1, .. })));
        assert!(matches!(fk(&chain, &[0.0]), Err(KinematicsError::DimensionMismatch { .. })));
    }

    #[test]
    fn fk_rotation_is_proper() {
        let chain = spatial_3r();
        let r = fk(&chain, &[0.4, -0.3, 1.1]).unwrap().rotation.to_rotation_matrix();
        let m = r.matrix();
        assert!((m.transpose() * m - nalgebra::Matrix3::identity()).norm() < 1e-9);
        assert!((m.determinant() - 1.0).abs() < 1e-9);
    }
}
