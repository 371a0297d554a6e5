use serde::{Deserialize, Serialize};

use super::{
    approach_ranges, ground_truth, keyframes, render_depth_with, Approach, CameraPose, Rendered,
    SceneSpec, VisibleObject,
};
use crate::depth_io::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::Threading;

/// A camera approach toward the first object of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub scene: SceneSpec,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub start_range_mm: f64,
    pub end_range_mm: f64,
    pub frames: usize,
    pub keyframe_every: usize,
    pub keyframe_first: usize,
}

impl SequenceSpec {
    pub fn new(scene: SceneSpec, start_range_mm: f64, end_range_mm: f64, frames: usize) -> Self {
        Self {
            scene,
            azimuth_deg: 0.0,
            elevation_deg: 45.0,
            start_range_mm,
            end_range_mm,
            frames,
            keyframe_every: 20,
            keyframe_first: 100,
        }
    }

    pub fn target_id(&self) -> Result<u8> {
        self.scene
            .objects
            .first()
            .map(|o| o.id)
            .ok_or_else(|| Error::param("scene", "a sequence needs at least one object"))
    }

    pub fn approach(&self) -> Result<Approach> {
        let target = self
            .scene
            .objects
            .first()
            .ok_or_else(|| Error::param("scene", "a sequence needs at least one object"))?;
        Ok(Approach {
            target: target.primitive.aim_point(),
            azimuth_deg: self.azimuth_deg,
            elevation_deg: self.elevation_deg,
        })
    }
}

/// One rendered frame of a sequence.
#[derive(Debug, Clone)]
pub struct SimulatedFrame {
    pub index: usize,
    pub range_mm: f64,
    pub pose: CameraPose,
    pub keyframe: bool,
    pub rendered: Rendered,
    pub ground_truth: Vec<VisibleObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub index: usize,
    /// Frame timestamp; equals `index`.
    pub timestamp: u64,
    pub depth_file: String,
    pub label_file: String,
    pub range_mm: f64,
    pub pose: CameraPose,
    pub keyframe: bool,
    pub ground_truth: Vec<VisibleObject>,
}

/// Everything needed to score a run over a simulated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sequence: SequenceSpec,
    pub intrinsics: CameraIntrinsics,
    pub target_id: u8,
    pub keyframes: Vec<usize>,
    pub frames: Vec<ManifestFrame>,
}

impl Manifest {
    pub fn frame(&self, timestamp: u64) -> Option<&ManifestFrame> {
        self.frames.iter().find(|f| f.timestamp == timestamp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("manifest: {e}")))
    }
}

pub fn depth_file_name(index: usize) -> String {
    format!("frame_{index:04}.pgm")
}

pub fn label_file_name(index: usize) -> String {
    format!("label_{index:04}.pgm")
}

/// Renders every frame of `spec` in order, handing each to `sink`, and
/// returns the manifest. Frames are not retained.
pub fn simulate_sequence<F>(
    spec: &SequenceSpec,
    intr: &CameraIntrinsics,
    threading: Threading,
    mut sink: F,
) -> Result<Manifest>
where
    F: FnMut(SimulatedFrame) -> Result<()>,
{
    let target_id = spec.target_id()?;
    let approach = spec.approach()?;
    let ranges = approach_ranges(spec.start_range_mm, spec.end_range_mm, spec.frames)?;
    let keys = keyframes(spec.frames, spec.keyframe_every, spec.keyframe_first);
    let mut frames = Vec::with_capacity(spec.frames);
    for (index, &range_mm) in ranges.iter().enumerate() {
        let pose = approach.pose_at(range_mm)?;
        let rendered = render_depth_with(&spec.scene, &pose, intr, index as u64, threading)?;
        let truth = ground_truth(&spec.scene, &pose, intr)?;
        let keyframe = keys.binary_search(&index).is_ok();
        frames.push(ManifestFrame {
            index,
            timestamp: index as u64,
            depth_file: depth_file_name(index),
            label_file: label_file_name(index),
            range_mm,
            pose,
            keyframe,
            ground_truth: truth.clone(),
        });
        sink(SimulatedFrame {
            index,
            range_mm,
            pose,
            keyframe,
            rendered,
            ground_truth: truth,
        })?;
    }
    Ok(Manifest {
        sequence: spec.clone(),
        intrinsics: *intr,
        target_id,
        keyframes: keys,
        frames,
    })
}
