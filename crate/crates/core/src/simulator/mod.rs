//! Synthetic tabletop depth scenes with exact ground truth.
//!
//! The scene frame has +z up and the table top horizontal. Cameras use the
//! usual optical frame (x right, y down, z forward); a [`CameraPose`] maps
//! camera coordinates to scene coordinates. Rendered values are depth along
//! the optical axis, matching what [`backproject`](crate::depth_io::backproject)
//! expects.

mod generate;
mod primitives;
mod sequence;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use generate::{generate_scene, pairwise_separated, ObjectShape, SceneTemplate};
pub use primitives::{Footprint, Primitive};
pub use sequence::{
    depth_file_name, label_file_name, simulate_sequence, Manifest, ManifestFrame, SequenceSpec,
    SimulatedFrame,
};

use crate::depth_io::{CameraIntrinsics, DepthFrame};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Point3};
use crate::Threading;

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_PLANE: u8 = 1;
/// Smallest label usable by an object.
pub const FIRST_OBJECT_ID: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripType {
    Pinch,
    Spherical,
    Cylindrical,
}

impl std::fmt::Display for GripType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GripType::Pinch => "pinch",
            GripType::Spherical => "spherical",
            GripType::Cylindrical => "cylindrical",
        })
    }
}

impl std::str::FromStr for GripType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pinch" => Ok(GripType::Pinch),
            "spherical" | "spherical grip" => Ok(GripType::Spherical),
            "cylindrical" | "cylindrical grip" => Ok(GripType::Cylindrical),
            other => Err(Error::Schema(format!("unknown grip type `{other}`"))),
        }
    }
}

/// Horizontal rectangular table top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub center: Point3,
    /// Half sizes along scene x and y.
    pub half_extents: [f64; 2],
}

impl Default for PlaneSpec {
    fn default() -> Self {
        Self {
            center: Point3::ORIGIN,
            half_extents: [1000.0, 1000.0],
        }
    }
}

impl PlaneSpec {
    pub fn height(&self) -> f64 {
        self.center.z
    }

    fn contains_xy(&self, p: Point3) -> bool {
        (p.x - self.center.x).abs() <= self.half_extents[0]
            && (p.y - self.center.y).abs() <= self.half_extents[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Label written to the ground-truth image, at least [`FIRST_OBJECT_ID`].
    pub id: u8,
    pub primitive: Primitive,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grip: Option<GripType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub plane: PlaneSpec,
    /// The first object is the approach target.
    pub objects: Vec<SceneObject>,
    /// Depth noise standard deviation in mm.
    pub noise_sigma: f64,
    #[serde(default)]
    pub dropout_rate: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Render(msg));
        if !(self.plane.half_extents.iter().all(|&h| h > 0.0) && self.plane.center.is_finite()) {
            return bad("table extent must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for obj in &self.objects {
            if obj.id < FIRST_OBJECT_ID {
                return bad(format!("object id {} is reserved", obj.id));
            }
            if !seen.insert(obj.id) {
                return bad(format!("duplicate object id {}", obj.id));
            }
            obj.primitive.validate().map_err(Error::Render)?;
            if obj.primitive.min_z() < self.plane.height() - 1e-6 {
                return bad(format!("object {} extends below the table", obj.id));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: u8) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Point3,
    /// Columns are the camera x, y, z axes expressed in the scene frame.
    pub rotation: Mat3,
}

impl CameraPose {
    pub fn new(position: Point3, rotation: Mat3) -> Result<Self> {
        if !rotation.is_rotation(1e-9) {
            return Err(Error::Render(
                "camera orientation is not a proper rotation".into(),
            ));
        }
        Ok(Self { position, rotation })
    }

    /// Camera at `position` with its optical axis through `target` and image
    /// rows running downward in the scene where possible.
    pub fn look_at(position: Point3, target: Point3) -> Result<Self> {
        let forward = (target - position)
            .normalized()
            .ok_or_else(|| Error::Render("camera position equals target".into()))?;
        let up = Point3::new(0.0, 0.0, 1.0);
        let right = forward
            .cross(up)
            .normalized()
            .or_else(|| forward.cross(Point3::new(0.0, 1.0, 0.0)).normalized())
            .expect("one hint is not parallel");
        let down = forward.cross(right);
        Self::new(position, Mat3::from_columns(right, down, forward))
    }

    pub fn to_scene(&self, p_cam: Point3) -> Point3 {
        self.position + self.rotation.mul_vec(p_cam)
    }

    pub fn to_camera(&self, p_scene: Point3) -> Point3 {
        self.rotation.transpose().mul_vec(p_scene - self.position)
    }
}

/// A rendered frame: depth in mm (0 where invalid) and per-pixel labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub width: usize,
    pub height: usize,
    pub depth_mm: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Rendered {
    /// Quantizes depth to sensor units, saturating at `u16::MAX`.
    pub fn to_frame(&self, intr: &CameraIntrinsics) -> Result<DepthFrame> {
        let data = self
            .depth_mm
            .iter()
            .map(|&z| (z / intr.depth_scale).round().clamp(0.0, u16::MAX as f64) as u16)
            .collect();
        DepthFrame::new(self.width, self.height, data)
    }

    /// Per-object centroid of the visible surface in camera coordinates.
    pub fn visible_objects(&self, intr: &CameraIntrinsics) -> Vec<VisibleObject> {
        let mut acc: std::collections::BTreeMap<u8, (Point3, usize)> = Default::default();
        for v in 0..self.height {
            for u in 0..self.width {
                let i = v * self.width + u;
                let (z, label) = (self.depth_mm[i], self.labels[i]);
                if label >= FIRST_OBJECT_ID && z > 0.0 {
                    let e = acc.entry(label).or_insert((Point3::ORIGIN, 0));
                    e.0 += intr.unproject(u as f64, v as f64, z);
                    e.1 += 1;
                }
            }
        }
        acc.into_iter()
            .map(|(id, (sum, n))| VisibleObject {
                id,
                centroid: sum / n as f64,
                pixels: n,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub id: u8,
    /// Camera-frame centroid of the visible surface in mm.
    pub centroid: Point3,
    pub pixels: usize,
}

/// Renders with the scene's seed and noise stream 0.
pub fn render_depth(
    scene: &SceneSpec,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<Rendered> {
    render_depth_with(scene, pose, intr, 0, Threading::Single)
}

/// Renders frame `frame_index` of a sequence. Each row draws its noise from
/// its own substream of the scene seed, so output does not depend on
/// `threading`.
pub fn render_depth_with(
    scene: &SceneSpec,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    frame_index: u64,
    threading: Threading,
) -> Result<Rendered> {
    scene.validate()?;
    intr.validate()?;
    if !pose.rotation.is_rotation(1e-9) {
        return Err(Error::Render(
            "camera orientation is not a proper rotation".into(),
        ));
    }
    for obj in &scene.objects {
        if obj.primitive.signed_distance(pose.position) <= 0.0 {
            return Err(Error::Render(format!("camera is inside object {}", obj.id)));
        }
    }
    let (w, h) = (intr.width, intr.height);
    let mut depth_mm = vec![0.0; w * h];
    let mut labels = vec![LABEL_BACKGROUND; w * h];
    let render_row = |(v, (depth_row, label_row)): (usize, (&mut [f64], &mut [u8]))| {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream((frame_index << 24) | v as u64);
        for u in 0..w {
            let noise: f64 = rng.sample(StandardNormal);
            let keep = rng.random::<f64>() >= scene.dropout_rate;
            if let Some((z, label)) = cast(scene, pose, intr, u, v) {
                let noisy = z + scene.noise_sigma * noise;
                if keep && noisy > 0.0 {
                    depth_row[u] = noisy;
                }
                label_row[u] = label;
            }
        }
    };
    let rows = depth_mm.chunks_mut(w).zip(labels.chunks_mut(w)).enumerate();
    match threading {
        Threading::Single => rows.for_each(render_row),
        Threading::Parallel => rows
            .collect::<Vec<_>>()
            .into_par_iter()
            .for_each(render_row),
    }
    Ok(Rendered {
        width: w,
        height: h,
        depth_mm,
        labels,
    })
}

/// Nearest surface hit for pixel `(u, v)`: depth along the optical axis and
/// label.
fn cast(
    scene: &SceneSpec,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    u: usize,
    v: usize,
) -> Option<(f64, u8)> {
    let dir_cam = Point3::new(
        (u as f64 - intr.cx) / intr.fx,
        (v as f64 - intr.cy) / intr.fy,
        1.0,
    );
    let dir = pose.rotation.mul_vec(dir_cam);
    let o = pose.position;
    let mut best: Option<(f64, u8)> = None;
    if dir.z != 0.0 {
        let t = (scene.plane.height() - o.z) / dir.z;
        if t > 0.0 && scene.plane.contains_xy(o + dir * t) {
            best = Some((t, LABEL_PLANE));
        }
    }
    for obj in &scene.objects {
        if let Some(t) = obj.primitive.intersect(o, dir) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, obj.id));
            }
        }
    }
    best
}

/// Ground truth for one frame: visible-surface centroids from a noise-free,
/// dropout-free render.
pub fn ground_truth(
    scene: &SceneSpec,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<Vec<VisibleObject>> {
    let clean = SceneSpec {
        noise_sigma: 0.0,
        dropout_rate: 0.0,
        ..scene.clone()
    };
    Ok(render_depth(&clean, pose, intr)?.visible_objects(intr))
}

/// Direction of approach toward a target point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Approach {
    pub target: Point3,
    /// Rotation of the approach side about scene z; 0 approaches from -y.
    pub azimuth_deg: f64,
    /// Angle of the line of sight above the table.
    pub elevation_deg: f64,
}

impl Approach {
    pub fn toward(target: Point3) -> Self {
        Self {
            target,
            azimuth_deg: 0.0,
            elevation_deg: 45.0,
        }
    }

    /// Unit vector from the target to the camera.
    pub fn offset_direction(&self) -> Point3 {
        let (az, el) = (
            self.azimuth_deg.to_radians(),
            self.elevation_deg.to_radians(),
        );
        Point3::new(az.sin() * el.cos(), -az.cos() * el.cos(), el.sin())
    }

    pub fn pose_at(&self, range: f64) -> Result<CameraPose> {
        CameraPose::look_at(self.target + self.offset_direction() * range, self.target)
    }
}

/// Linearly spaced ranges from `start` to `end` inclusive.
pub fn approach_ranges(start: f64, end: f64, frames: usize) -> Result<Vec<f64>> {
    if !(start > end && end > 0.0 && start.is_finite()) {
        return Err(Error::param(
            "trajectory",
            format!("need start_range > end_range > 0, got {start} -> {end}"),
        ));
    }
    if frames < 2 {
        return Err(Error::param(
            "trajectory",
            format!("need at least 2 frames, got {frames}"),
        ));
    }
    let last = (frames - 1) as f64;
    Ok((0..frames)
        .map(|i| {
            if i + 1 == frames {
                end
            } else {
                start + (end - start) * i as f64 / last
            }
        })
        .collect())
}

/// Camera poses approaching `approach.target` from `start` to `end` mm.
pub fn approach_trajectory(
    approach: &Approach,
    start: f64,
    end: f64,
    frames: usize,
) -> Result<Vec<CameraPose>> {
    approach_ranges(start, end, frames)?
        .into_iter()
        .map(|r| approach.pose_at(r))
        .collect()
}

/// Indices `0, every, 2·every, …` below `min(first, frames)`.
pub fn keyframes(frames: usize, every: usize, first: usize) -> Vec<usize> {
    if every == 0 {
        return Vec::new();
    }
    (0..frames.min(first)).step_by(every).collect()
}
