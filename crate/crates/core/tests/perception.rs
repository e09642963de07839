use nalgebra::{Matrix3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use untethered_core::perception::{render, SceneObject, Shape, SyntheticScene};
use untethered_core::{detect_and_locate, load_config, Config};

fn config() -> Config {
    load_config(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tribus.json"), false).unwrap()
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Reference head: pan at (0, -0.12, 0.4), tilt 0.05 above it, camera body
/// 0.03 forward and 0.02 up from the tilt axis.
fn oracle_pose(pan: f64, tilt: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let body = rz(pan) * ry(tilt);
    let pos = Vector3::new(0.0, -0.12, 0.4)
        + rz(pan) * (Vector3::new(0.0, 0.0, 0.05) + ry(tilt) * Vector3::new(0.03, 0.0, 0.02));
    // Optical x right, y down, z forward in a body frame with x forward, z up.
    let optical = Matrix3::from_columns(&[-Vector3::y(), -Vector3::z(), Vector3::x()]);
    (body * optical, pos)
}

#[test]
fn camera_pose_matches_explicit_trig() {
    let cfg = config();
    let mut mount = cfg.camera.unwrap().mount;
    for (pan, tilt) in [(0.0, 0.0), (0.55, 0.95), (-1.2, 1.3), (0.3, -0.4)] {
        mount.head_pan = pan;
        mount.head_tilt = tilt;
        let pose = mount.camera_pose().unwrap();
        let (r, t) = oracle_pose(pan, tilt);
        assert!((pose.rotation.to_rotation_matrix().matrix() - r).amax() < 1e-12);
        assert!((pose.translation.vector - t).amax() < 1e-12);
    }
}

#[test]
fn project_deproject_round_trip() {
    let k = config().camera.unwrap().intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let (u, v, z) = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0), rng.random_range(0.1..3.0));
        let p = k.deproject(u, v, z);
        assert!((p.z - z).abs() < 1e-12);
        let (u2, v2) = k.project(&p);
        assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9);
    }
}

#[test]
fn facing_discs_are_located_within_two_millimeters() {
    let cfg = config();
    let cam = cfg.camera.clone().unwrap();
    let pose = cam.mount.camera_pose().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        // Within 1 m of the camera.
        let center = loop {
            let (u, v) = (rng.random_range(120.0..520.0), rng.random_range(100.0..380.0));
            let p = cam.intrinsics.deproject(u, v, rng.random_range(0.3..1.0));
            if p.norm() <= 1.0 {
                break pose.transform_point(&p.into()).coords;
            }
        };
        let scene = SyntheticScene {
            background: [90, 90, 90],
            head_pan: None,
            head_tilt: None,
            objects: vec![SceneObject {
                color: [220, 20, 30],
                shape: Shape::Disc { center: center.into(), radius: 0.02 },
            }],
        };
        let frame = render(&scene, cam.width, cam.height, cam.intrinsics, &pose);
        let det = detect_and_locate(&frame, &cfg.hsv_labels, &cam.mount, "red").unwrap();
        let err = (Vector3::from(det.point_base) - center).norm();
        worst = worst.max(err);
    }
    assert!(worst < 2e-3, "worst error {worst}");
}
