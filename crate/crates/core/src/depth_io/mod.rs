//! Depth frames, pinhole intrinsics and the conversion between pixels and
//! camera-frame points.

mod formats;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use formats::{
    load_depth_frame, read_pgm, write_csv, write_pgm16, write_pgm8, write_raw16le, DepthFormat,
    PgmImage, RawSidecar,
};

use crate::error::{Error, Result};
pub use crate::geometry::Point3;

/// Pinhole camera parameters. Depths are converted to millimeters with
/// `depth_scale` (mm per raw unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    1.0
}

impl Default for CameraIntrinsics {
    /// 640×480 with a 600 px focal length, roughly a D415 depth stream.
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            depth_scale: 1.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return Err(Error::param("fx", format!("must be > 0, got {}", self.fx)));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::param("fy", format!("must be > 0, got {}", self.fy)));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::param(
                "cx",
                format!("must lie in [0, {}), got {}", self.width, self.cx),
            ));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::param(
                "cy",
                format!("must lie in [0, {}), got {}", self.height, self.cy),
            ));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::param(
                "depth_scale",
                format!("must be > 0, got {}", self.depth_scale),
            ));
        }
        Ok(())
    }

    /// Reads intrinsics from a JSON file with keys
    /// `fx, fy, cx, cy, width, height, depth_scale`.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let intr: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        intr.validate()?;
        Ok(intr)
    }

    /// Camera-frame point for pixel `(u, v)` at depth `z_mm`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z_mm: f64) -> Point3 {
        Point3::new(
            (u - self.cx) * z_mm / self.fx,
            (v - self.cy) * z_mm / self.fy,
            z_mm,
        )
    }
}

/// Row-major raw depth samples. A sample of 0 means "no reading".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    data: Vec<u16>,
    pub timestamp: u64,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                context: "depth frame".into(),
                reason: format!(
                    "{}×{} frame needs {} samples, got {}",
                    width,
                    height,
                    width * height,
                    data.len()
                ),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            timestamp: 0,
        })
    }

    pub fn with_timestamp(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * self.width + u]
    }
}

/// Ordered points with optional per-point density and confidence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    densities: Option<Vec<u32>>,
    confidences: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            densities: None,
            confidences: None,
        }
    }

    pub fn with_densities(mut self, densities: Vec<u32>) -> Result<Self> {
        if densities.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                actual: densities.len(),
            });
        }
        self.densities = Some(densities);
        Ok(self)
    }

    pub fn with_confidences(mut self, confidences: Vec<f64>) -> Result<Self> {
        if confidences.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                actual: confidences.len(),
            });
        }
        if let Some(bad) = confidences.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::param(
                "confidences",
                format!("{bad} lies outside [0, 1]"),
            ));
        }
        self.confidences = Some(confidences);
        Ok(self)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn densities(&self) -> Option<&[u32]> {
        self.densities.as_deref()
    }

    pub fn confidences(&self) -> Option<&[f64]> {
        self.confidences.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points at `indices`, in the given order, with attributes carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            densities: self
                .densities
                .as_ref()
                .map(|d| indices.iter().map(|&i| d[i]).collect()),
            confidences: self
                .confidences
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        PointCloud::new(points)
    }
}

fn check_dims(width: usize, height: usize, intr: &CameraIntrinsics) -> Result<()> {
    if width != intr.width || height != intr.height {
        return Err(Error::DimensionMismatch {
            context: "backproject".into(),
            reason: format!(
                "frame is {}×{}, intrinsics are {}×{}",
                width, height, intr.width, intr.height
            ),
        });
    }
    Ok(())
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::param("stride", "must be >= 1"));
    }
    Ok(())
}

/// Backprojects every `stride`-th pixel (in both directions) with a nonzero
/// sample. Points come out in row-major pixel order.
pub fn backproject(
    frame: &DepthFrame,
    intr: &CameraIntrinsics,
    stride: usize,
) -> Result<PointCloud> {
    check_dims(frame.width, frame.height, intr)?;
    check_stride(stride)?;
    let mut points = Vec::with_capacity((frame.width / stride + 1) * (frame.height / stride + 1));
    for v in (0..frame.height).step_by(stride) {
        let row = &frame.data[v * frame.width..(v + 1) * frame.width];
        for u in (0..frame.width).step_by(stride) {
            let raw = row[u];
            if raw == 0 {
                continue;
            }
            points.push(intr.unproject(u as f64, v as f64, raw as f64 * intr.depth_scale));
        }
    }
    Ok(PointCloud::new(points))
}

/// Same as [`backproject`] for an unquantized depth map already in
/// millimeters. Non-positive or non-finite entries are treated as invalid.
pub fn backproject_mm(
    depth_mm: &[f64],
    width: usize,
    height: usize,
    intr: &CameraIntrinsics,
    stride: usize,
) -> Result<PointCloud> {
    check_dims(width, height, intr)?;
    check_stride(stride)?;
    if depth_mm.len() != width * height {
        return Err(Error::LengthMismatch {
            expected: width * height,
            actual: depth_mm.len(),
        });
    }
    let mut points = Vec::new();
    for v in (0..height).step_by(stride) {
        for u in (0..width).step_by(stride) {
            let z = depth_mm[v * width + u];
            if z > 0.0 && z.is_finite() {
                points.push(intr.unproject(u as f64, v as f64, z));
            }
        }
    }
    Ok(PointCloud::new(points))
}

/// Real-valued pixel coordinates of a camera-frame point.
pub fn project(p: Point3, intr: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok((p.x * intr.fx / p.z + intr.cx, p.y * intr.fy / p.z + intr.cy))
}
