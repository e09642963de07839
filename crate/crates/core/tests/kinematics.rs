use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use untethered_core::kinematics::{fk, jacobian, solve_trajectory, IkTask, Termination};
use untethered_core::{load_config, Config, KinematicChain};

fn config() -> Config {
    load_config(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tribus.json"), false).unwrap()
}

fn arm() -> KinematicChain {
    config().chains["left_arm"].clone()
}

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Rodrigues rotation about a unit axis as a homogeneous matrix.
fn rot(axis: [f64; 3], q: f64) -> M4 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|a| a / n);
    let (s, c) = q.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y, 0.0],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x, 0.0],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn trans(p: [f64; 3]) -> M4 {
    [[1.0, 0.0, 0.0, p[0]], [0.0, 1.0, 0.0, p[1]], [0.0, 0.0, 1.0, p[2]], [0.0, 0.0, 0.0, 1.0]]
}

/// Independent product-of-matrices FK (the reference chain has no link rotations).
fn fk_oracle(chain: &KinematicChain, q: &[f64]) -> M4 {
    let mut t = trans([0.0; 3]);
    for (j, &qi) in chain.joints.iter().zip(q) {
        assert_eq!(j.origin.rpy, [0.0; 3]);
        t = mul(&mul(&t, &trans(j.origin.xyz)), &rot(j.axis, qi));
    }
    mul(&t, &trans(chain.end_effector_offset.xyz))
}

fn random_q(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    chain.joints.iter().map(|j| rng.random_range(j.limit_lo..=j.limit_hi)).collect()
}

#[test]
fn zero_pose_is_product_of_static_origins() {
    let chain = arm();
    let pose = fk(&chain, &[0.0; 6]).unwrap();
    // 0.03+0.135+0.06+0.02+0.08 forward, 0.06+0.05+0.116 up.
    assert!((pose.translation.vector - Vector3::new(0.325, 0.0, 0.226)).norm() < 1e-12);
    assert!(pose.rotation.angle() < 1e-12);
}

#[test]
fn fk_matches_matrix_product_oracle() {
    let chain = arm();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let q = random_q(&chain, &mut rng);
        let pose = fk(&chain, &q).unwrap().to_homogeneous();
        let oracle = fk_oracle(&chain, &q);
        for i in 0..4 {
            for j in 0..4 {
                assert!((pose[(i, j)] - oracle[i][j]).abs() < 1e-12, "q = {q:?}");
            }
        }
        let r = pose.fixed_view::<3, 3>(0, 0);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
        assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() < 1e-9);
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let chain = arm();
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut q = random_q(&chain, &mut rng);
        chain.clamp(&mut q);
        // Keep the probes inside the limits.
        for (v, j) in q.iter_mut().zip(&chain.joints) {
            *v = v.clamp(j.limit_lo + 2.0 * h, j.limit_hi - 2.0 * h);
        }
        let jac = jacobian(&chain, &q).unwrap();
        for k in 0..chain.dof() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[k] += h;
            qm[k] -= h;
            let (tp, tm) = (fk(&chain, &qp).unwrap(), fk(&chain, &qm).unwrap());
            let dp = (tp.translation.vector - tm.translation.vector) / (2.0 * h);
            let dw = (tp.rotation * tm.rotation.inverse()).scaled_axis() / (2.0 * h);
            for r in 0..3 {
                worst = worst.max((jac[(r, k)] - dp[r]).abs());
                worst = worst.max((jac[(r + 3, k)] - dw[r]).abs());
            }
        }
    }
    assert!(worst < 1e-6, "max abs error {worst:e}");
}

#[test]
fn reachable_target_in_front_is_reached() {
    let cfg = config();
    let chain = &cfg.chains["left_arm"];
    let target = Isometry3::from_parts(Translation3::new(0.25, 0.0, 0.15), UnitQuaternion::identity());
    let task = IkTask::new(chain, target, &cfg.ik).position_only();
    let traj = solve_trajectory(chain, &chain.home(), &task).unwrap();
    assert_eq!(traj.termination, Termination::Reached);
    assert!(traj.samples.len() <= 201);
    assert!(traj.final_position_error < 1e-3);
}

/// Every sample inside the limits and every step inside the velocity box.
fn assert_feasible(chain: &KinematicChain, samples: &[Vec<f64>], dt: f64) {
    for (k, q) in samples.iter().enumerate() {
        assert_eq!(chain.limit_violation(q), None, "sample {k}");
        if k > 0 {
            for (i, j) in chain.joints.iter().enumerate() {
                assert!((q[i] - samples[k - 1][i]).abs() <= j.vel_limit * dt + 1e-12, "joint {i} step {k}");
            }
        }
    }
}

/// Lift axis sits 0.03 m ahead of the pan axis at 0.11 m; everything after it
/// stretches to 0.116 + 0.135 + 0.06 + 0.02 + 0.08 m.
const STRETCH: f64 = 0.411;

/// Distance of `p` inside the fully stretched sphere around the lift axis.
fn stretch_margin(p: &Vector3<f64>) -> f64 {
    let bearing = p.y.atan2(p.x);
    STRETCH - (p - Vector3::new(0.03 * bearing.cos(), 0.03 * bearing.sin(), 0.11)).norm()
}

#[test]
fn random_targets_near_home_are_reached_within_two_seconds() {
    let cfg = config();
    let chain = &cfg.chains["left_arm"];
    let home_tip = fk(chain, &chain.home()).unwrap().translation.vector;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut solved = 0;
    while solved < 50 {
        let mut q = random_q(chain, &mut rng);
        q[5] = 0.0;
        let target = fk(chain, &q).unwrap();
        if (target.translation.vector - home_tip).norm() > 0.15 || stretch_margin(&target.translation.vector) < 0.01 {
            continue;
        }
        let task = IkTask::new(chain, target, &cfg.ik).position_only();
        assert_eq!(task.dt, 0.01);
        let traj = solve_trajectory(chain, &chain.home(), &task).unwrap();
        assert_eq!(traj.termination, Termination::Reached, "target {:?}", target.translation.vector);
        assert!(traj.duration() <= 2.0);
        assert!(traj.final_position_error < 1e-3);
        assert_feasible(chain, &traj.samples, task.dt);
        solved += 1;
    }
}

#[test]
fn target_beyond_reach_ends_on_boundary_sphere() {
    let cfg = config();
    let chain = &cfg.chains["left_arm"];
    // Lift axis sits 0.03 m ahead of the pan axis; everything after it stretches to
    // 0.116 + 0.135 + 0.06 + 0.02 + 0.08 m.
    let radius = 0.411;
    let target = Isometry3::from_parts(Translation3::new(1.0, 0.0, 0.11), UnitQuaternion::identity());
    let mut task = IkTask::new(chain, target, &cfg.ik).position_only();
    task.max_steps = 400;
    let traj = solve_trajectory(chain, &chain.home(), &task).unwrap();
    assert_ne!(traj.termination, Termination::Reached);
    assert_feasible(chain, &traj.samples, task.dt);
    let q = traj.final_q();
    let centre = Vector3::new(0.03 * q[0].cos(), 0.03 * q[0].sin(), 0.11);
    let tip = fk(chain, q).unwrap().translation.vector;
    let gap = radius - (tip - centre).norm();
    assert!((0.0..5e-3).contains(&gap), "gap {gap}");
}

#[test]
fn excluded_gripper_never_moves() {
    let cfg = config();
    let chain = &cfg.chains["right_arm"];
    let target = Isometry3::from_parts(Translation3::new(0.3, -0.05, 0.05), UnitQuaternion::identity());
    let traj = solve_trajectory(chain, &chain.home(), &IkTask::new(chain, target, &cfg.ik).position_only()).unwrap();
    assert!(traj.samples.iter().all(|q| q[5] == chain.home()[5]));
}
