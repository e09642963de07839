//! RGB-D color-blob localization.
//!
//! Pixels are thresholded in HSV, grouped into 8-connected components, and the
//! chosen component is lifted to 3D with its mean pixel position and median
//! depth. The camera point is then carried into the arm base frame through the
//! neck chain, a fixed optical-to-body rotation, and a calibration offset.
//!
//! HSV uses the hexcone model: `v = max`, `s = (max - min) / max` (0 when
//! `max = 0`), hue in degrees from the dominant channel, and `h = 0` for greys.

mod frame;
mod render;

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use frame::RgbdFrame;
pub use render::{render, SceneObject, Shape, SyntheticScene};

use crate::kinematics::fk;
use crate::model::{KinematicChain, ValidationError};

#[derive(Debug, thiserror::Error)]
pub enum PerceptionError {
    #[error("label {0:?} not in configured ranges")]
    UnknownLabel(String),
    #[error("target not found: no {0:?} component meets min_area")]
    TargetNotFound(String),
    #[error("no depth support: component has no valid depth pixels")]
    NoDepthSupport,
    #[error("frame size mismatch: {0}")]
    FrameSize(String),
    #[error("image {path}: {message}")]
    Image { path: String, message: String },
    #[error("neck kinematics: {0}")]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}

/// Pinhole intrinsics; pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(ValidationError::new(format!("{field}.fx"), "focal lengths must be > 0"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(ValidationError::new(format!("{field}.cx"), "principal point must be finite"));
        }
        Ok(())
    }

    pub fn deproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new(depth * (u - self.cx) / self.fx, depth * (v - self.cy) / self.fy, depth)
    }

    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Hue interval in degrees (wrapping when `h_lo > h_hi`) with saturation
/// and value bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsvRange {
    pub label: String,
    pub h_lo: f64,
    pub h_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub min_area: usize,
}

impl HsvRange {
    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        let f = |s: &str| format!("{field}.{s}");
        for (name, h) in [("h_lo", self.h_lo), ("h_hi", self.h_hi)] {
            if !(0.0..=360.0).contains(&h) {
                return Err(ValidationError::new(f(name), format!("must be in [0, 360], got {h}")));
            }
        }
        for (name, lo, hi) in [("s_lo", self.s_lo, self.s_hi), ("v_lo", self.v_lo, self.v_hi)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(ValidationError::new(f(name), format!("need 0 <= lo <= hi <= 1, got [{lo}, {hi}]")));
            }
        }
        if self.min_area < 1 {
            return Err(ValidationError::new(f("min_area"), "must be >= 1"));
        }
        Ok(())
    }

    pub fn contains(&self, (h, s, v): (f64, f64, f64)) -> bool {
        let hue =
            if self.h_lo <= self.h_hi { h >= self.h_lo && h <= self.h_hi } else { h >= self.h_lo || h <= self.h_hi };
        hue && s >= self.s_lo && s <= self.s_hi && v >= self.v_lo && v <= self.v_hi
    }
}

/// Hexcone conversion. Returns `(h in [0, 360), s, v)`.
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (f64::from(r) / 255.0, f64::from(g) / 255.0, f64::from(b) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    let s = if max > 0.0 { c / max } else { 0.0 };
    if c == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        60.0 * ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / c + 2.0)
    } else {
        60.0 * ((r - g) / c + 4.0)
    };
    (if h >= 360.0 { h - 360.0 } else { h }, s, max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// 1-based label in `Segmentation::labels`.
    pub id: u32,
    pub area: usize,
    /// (u_min, v_min, u_max, v_max), inclusive.
    pub bbox: (u32, u32, u32, u32),
    /// Row-major pixel indices.
    pub pixels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Per-pixel component id; 0 is background or a discarded component.
    pub labels: Vec<u32>,
    /// Ordered by first pixel in scanline order.
    pub components: Vec<Component>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    // Keep the smaller index as root so roots are first pixels.
    if ra < rb {
        parent[rb] = ra;
    } else if rb < ra {
        parent[ra] = rb;
    }
}

/// Thresholds `frame` with `range` and labels 8-connected components,
/// dropping those smaller than `min_area`.
pub fn segment(frame: &RgbdFrame, range: &HsvRange) -> Segmentation {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mask: Vec<bool> = frame.rgb.iter().map(|&px| range.contains(rgb_to_hsv(px))).collect();
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            if x > 0 && mask[i - 1] {
                union(&mut parent, i, i - 1);
            }
            if y > 0 {
                let up = i - w;
                if mask[up] {
                    union(&mut parent, i, up);
                }
                if x > 0 && mask[up - 1] {
                    union(&mut parent, i, up - 1);
                }
                if x + 1 < w && mask[up + 1] {
                    union(&mut parent, i, up + 1);
                }
            }
        }
    }

    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in (0..w * h).filter(|&i| mask[i]) {
        let r = find(&mut parent, i);
        by_root.entry(r).or_default().push(i);
    }
    let mut labels = vec![0u32; w * h];
    let mut components = Vec::new();
    for pixels in by_root.into_values().filter(|p| p.len() >= range.min_area) {
        let id = components.len() as u32 + 1;
        let mut bbox = (u32::MAX, u32::MAX, 0, 0);
        for &i in &pixels {
            labels[i] = id;
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x), bbox.3.max(y));
        }
        components.push(Component { id, area: pixels.len(), bbox, pixels });
    }
    Segmentation { labels, components }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub pixel: (f64, f64),
    pub depth: f64,
    pub point: Vector3<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Mean pixel position and median valid depth of `component`, deprojected.
pub fn centroid_3d(frame: &RgbdFrame, component: &Component) -> Result<Centroid, PerceptionError> {
    let w = frame.width as usize;
    let n = component.pixels.len() as f64;
    let (su, sv) = component.pixels.iter().fold((0.0, 0.0), |(su, sv), &i| (su + (i % w) as f64, sv + (i / w) as f64));
    let pixel = (su / n, sv / n);
    let mut depths: Vec<f64> = component.pixels.iter().map(|&i| frame.depth[i]).filter(|&d| d > 0.0).collect();
    if depths.is_empty() {
        return Err(PerceptionError::NoDepthSupport);
    }
    let depth = median(&mut depths);
    Ok(Centroid { pixel, depth, point: frame.intrinsics.deproject(pixel.0, pixel.1, depth) })
}

/// Head pose and calibration that place the camera in the arm base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub head_pan: f64,
    pub head_tilt: f64,
    /// Pan then tilt; the tool frame is the camera body (x forward, z up).
    pub neck_chain: KinematicChain,
    /// Row-major rotation taking optical axes (x right, y down, z forward) to body axes.
    #[serde(default = "default_optical_alignment")]
    pub optical_alignment: [[f64; 3]; 3],
    /// Meters, base frame.
    #[serde(default)]
    pub calibration_offset: [f64; 3],
}

pub fn default_optical_alignment() -> [[f64; 3]; 3] {
    [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
}

impl CameraMount {
    pub fn alignment(&self) -> Matrix3<f64> {
        let a = &self.optical_alignment;
        Matrix3::from_fn(|r, c| a[r][c])
    }

    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        self.neck_chain.validate(&format!("{field}.neck_chain"))?;
        if self.neck_chain.dof() != 2 {
            return Err(ValidationError::new(
                format!("{field}.neck_chain"),
                format!("expected 2 joints (pan, tilt), got {}", self.neck_chain.dof()),
            ));
        }
        if let Some(i) = self.neck_chain.limit_violation(&[self.head_pan, self.head_tilt]) {
            let name = if i == 0 { "head_pan" } else { "head_tilt" };
            return Err(ValidationError::new(format!("{field}.{name}"), "outside neck joint limits"));
        }
        let r = self.alignment();
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(ValidationError::new(format!("{field}.optical_alignment"), "must be a proper rotation"));
        }
        if self.calibration_offset.iter().any(|v| !v.is_finite()) {
            return Err(ValidationError::new(format!("{field}.calibration_offset"), "must be finite"));
        }
        Ok(())
    }

    /// Optical frame pose in the base frame, calibration offset included.
    pub fn camera_pose(&self) -> Result<Isometry3<f64>, PerceptionError> {
        let body = fk(&self.neck_chain, &[self.head_pan, self.head_tilt])?;
        let align = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.alignment()));
        let mut pose = body * Isometry3::from_parts(nalgebra::Translation3::identity(), align);
        pose.translation.vector += Vector3::from(self.calibration_offset);
        Ok(pose)
    }
}

/// Maps a point in the optical frame to the arm base frame.
pub fn camera_to_base(mount: &CameraMount, point_camera: &Vector3<f64>) -> Result<Vector3<f64>, PerceptionError> {
    Ok(mount.camera_pose()?.transform_point(&Point3::from(*point_camera)).coords)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub pixel_centroid: [f64; 2],
    pub area: usize,
    pub point_camera: [f64; 3],
    pub point_base: [f64; 3],
}

impl Detection {
    /// Grasp pose at the detected point. `rpy` is taken in a frame yawed
    /// about base z toward the target, so the approach follows the bearing.
    pub fn grasp_pose(&self, rpy: [f64; 3]) -> Isometry3<f64> {
        let p = Vector3::from(self.point_base);
        let bearing = UnitQuaternion::from_euler_angles(0.0, 0.0, p.y.atan2(p.x));
        Isometry3::from_parts(
            nalgebra::Translation3::from(p),
            bearing * UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        )
    }
}

/// Locates the largest `label` component (earliest in scanline order on ties).
pub fn detect_and_locate(
    frame: &RgbdFrame,
    ranges: &[HsvRange],
    mount: &CameraMount,
    label: &str,
) -> Result<Detection, PerceptionError> {
    let range = ranges.iter().find(|r| r.label == label).ok_or_else(|| PerceptionError::UnknownLabel(label.into()))?;
    let seg = segment(frame, range);
    let best = seg
        .components
        .iter()
        .rev()
        .max_by_key(|c| c.area)
        .ok_or_else(|| PerceptionError::TargetNotFound(label.into()))?;
    let c = centroid_3d(frame, best)?;
    let base = camera_to_base(mount, &c.point)?;
    Ok(Detection {
        label: label.into(),
        pixel_centroid: [c.pixel.0, c.pixel.1],
        area: best.area,
        point_camera: c.point.into(),
        point_base: base.into(),
    })
}
