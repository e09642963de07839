use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage};

use super::{Intrinsics, PerceptionError};

/// Row-major color and depth; depth is meters with 0 marking invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[u8; 3]>,
    pub depth: Vec<f64>,
    pub intrinsics: Intrinsics,
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> PerceptionError {
    PerceptionError::Image { path: path.display().to_string(), message: e.to_string() }
}

impl RgbdFrame {
    /// Black frame with no valid depth.
    pub fn new(width: u32, height: u32, intrinsics: Intrinsics) -> Self {
        let n = (width * height) as usize;
        Self { width, height, rgb: vec![[0; 3]; n], depth: vec![0.0; n], intrinsics }
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let n = (self.width * self.height) as usize;
        if self.rgb.len() != n || self.depth.len() != n {
            return Err(PerceptionError::FrameSize(format!(
                "{}x{} frame with {} rgb and {} depth samples",
                self.width,
                self.height,
                self.rgb.len(),
                self.depth.len()
            )));
        }
        if self.depth.iter().any(|d| !(*d >= 0.0)) {
            return Err(PerceptionError::FrameSize("depth must be >= 0".into()));
        }
        Ok(())
    }

    /// Loads an 8-bit color PNG and a 16-bit depth PNG in millimeters.
    pub fn load_png(rgb_path: &Path, depth_path: &Path, intrinsics: Intrinsics) -> Result<Self, PerceptionError> {
        let rgb = image::open(rgb_path).map_err(|e| image_err(rgb_path, e))?.to_rgb8();
        let depth = image::open(depth_path).map_err(|e| image_err(depth_path, e))?.to_luma16();
        if rgb.dimensions() != depth.dimensions() {
            return Err(PerceptionError::FrameSize(format!(
                "color is {:?} but depth is {:?}",
                rgb.dimensions(),
                depth.dimensions()
            )));
        }
        let (width, height) = rgb.dimensions();
        Ok(Self {
            width,
            height,
            rgb: rgb.pixels().map(|p| p.0).collect(),
            depth: depth.pixels().map(|p| f64::from(p.0[0]) / 1000.0).collect(),
            intrinsics,
        })
    }

    /// Writes the color PNG and the 16-bit millimeter depth PNG.
    pub fn save_png(&self, rgb_path: &Path, depth_path: &Path) -> Result<(), PerceptionError> {
        let rgb = RgbImage::from_fn(self.width, self.height, |x, y| Rgb(self.rgb[(y * self.width + x) as usize]));
        rgb.save(rgb_path).map_err(|e| image_err(rgb_path, e))?;
        let depth: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(self.width, self.height, |x, y| {
            let mm = (self.depth[(y * self.width + x) as usize] * 1000.0).round();
            Luma([mm.clamp(0.0, f64::from(u16::MAX)) as u16])
        });
        depth.save(depth_path).map_err(|e| image_err(depth_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_keeps_millimeters() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics { fx: 50.0, fy: 50.0, cx: 4.0, cy: 3.0 };
        let mut f = RgbdFrame::new(8, 6, k);
        f.rgb[5] = [200, 10, 30];
        f.depth[5] = 0.734;
        f.depth[6] = 1.2;
        let (a, b) = (dir.path().join("c.png"), dir.path().join("d.png"));
        f.save_png(&a, &b).unwrap();
        let g = RgbdFrame::load_png(&a, &b, k).unwrap();
        assert_eq!(g.rgb, f.rgb);
        assert!(g.depth.iter().zip(&f.depth).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn missing_file_is_image_error() {
        let k = Intrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 };
        let r = RgbdFrame::load_png(Path::new("/nonexistent/a.png"), Path::new("/nonexistent/b.png"), k);
        assert!(matches!(r, Err(PerceptionError::Image { .. })));
    }
}
