//! Ray-cast renderer for synthetic RGB-D test scenes.

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Intrinsics, RgbdFrame};

/// Geometry in the arm base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Flat disc facing the camera.
    Disc {
        center: [f64; 3],
        radius: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
}

impl Shape {
    pub fn center(&self) -> Vector3<f64> {
        match *self {
            Shape::Disc { center, .. } | Shape::Sphere { center, .. } | Shape::Box { center, .. } => center.into(),
        }
    }

    /// Ray parameter of the nearest hit in front of the origin. `forward` is
    /// the optical axis; for rays built with unit optical z, `t` equals depth.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>, forward: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Disc { center, radius } => {
                let c = Vector3::from(center);
                let t = forward.dot(&(c - o)) / forward.dot(d);
                (t > 0.0 && (o + d * t - c).norm() <= radius).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let oc = o - Vector3::from(center);
                let a = d.norm_squared();
                let b = oc.dot(d);
                let disc = b * b - a * (oc.norm_squared() - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [(-b - s) / a, (-b + s) / a].into_iter().find(|&t| t > 0.0)
            }
            Shape::Box { center, half_extents } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let lo = center[k] - half_extents[k];
                    let hi = center[k] + half_extents[k];
                    if d[k].abs() < 1e-15 {
                        if o[k] < lo || o[k] > hi {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((lo - o[k]) / d[k], (hi - o[k]) / d[k]);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 > t1 || t1 <= 0.0 {
                    None
                } else if t0 > 0.0 {
                    Some(t0)
                } else {
                    Some(t1)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub color: [u8; 3],
    #[serde(flatten)]
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    /// Overrides for the configured head angles.
    #[serde(default)]
    pub head_pan: Option<f64>,
    #[serde(default)]
    pub head_tilt: Option<f64>,
    pub objects: Vec<SceneObject>,
}

fn default_background() -> [u8; 3] {
    [90, 90, 90]
}

/// Casts one ray per pixel center; background pixels get invalid depth.
pub fn render(scene: &SyntheticScene, width: u32, height: u32, k: Intrinsics, camera: &Isometry3<f64>) -> RgbdFrame {
    let mut frame = RgbdFrame::new(width, height, k);
    let o = camera.translation.vector;
    let forward = camera.rotation * Vector3::z();
    for v in 0..height {
        for u in 0..width {
            let d = camera.rotation * Vector3::new((f64::from(u) - k.cx) / k.fx, (f64::from(v) - k.cy) / k.fy, 1.0);
            let i = (v * width + u) as usize;
            let hit = scene
                .objects
                .iter()
                .filter_map(|obj| obj.shape.intersect(&o, &d, &forward).map(|t| (t, obj.color)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match hit {
                Some((t, color)) => {
                    frame.rgb[i] = color;
                    frame.depth[i] = t;
                }
                None => frame.rgb[i] = scene.background,
            }
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics {
        Intrinsics { fx: 200.0, fy: 200.0, cx: 79.5, cy: 59.5 }
    }

    #[test]
    fn sphere_on_axis_has_near_surface_depth() {
        let scene = SyntheticScene {
            background: [0; 3],
            head_pan: None,
            head_tilt: None,
            objects: vec![SceneObject {
                color: [255, 0, 0],
                shape: Shape::Sphere { center: [0.0, 0.0, 1.0], radius: 0.1 },
            }],
        };
        let f = render(&scene, 160, 120, k(), &Isometry3::identity());
        let centre = f.depth[59 * 160 + 79];
        assert!((centre - 0.9).abs() < 1e-3);
        assert_eq!(f.depth[0], 0.0);
        assert_eq!(f.rgb[0], [0; 3]);
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let scene = SyntheticScene {
            background: [0; 3],
            head_pan: None,
            head_tilt: None,
            objects: vec![
                SceneObject {
                    color: [0, 0, 255],
                    shape: Shape::Box { center: [0.0, 0.0, 2.0], half_extents: [0.5; 3] },
                },
                SceneObject { color: [255, 0, 0], shape: Shape::Disc { center: [0.0, 0.0, 1.0], radius: 0.05 } },
            ],
        };
        let f = render(&scene, 160, 120, k(), &Isometry3::identity());
        let i = 59 * 160 + 79;
        assert_eq!(f.rgb[i], [255, 0, 0]);
        assert!((f.depth[i] - 1.0).abs() < 1e-12);
        assert_eq!(f.rgb[40 * 160 + 40], [0, 0, 255]);
        assert!((f.depth[40 * 160 + 40] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scene_json_shape_tags() {
        let s: SyntheticScene = serde_json::from_str(
            r#"{"objects":[{"color":[255,0,0],"shape":"box","center":[0.3,0,0.02],"half_extents":[0.02,0.02,0.02]}]}"#,
        )
        .unwrap();
        assert!(matches!(s.objects[0].shape, Shape::Box { .. }));
        assert_eq!(s.background, default_background());
    }
}
