//! Run configuration loaded from a single JSON document.
//!
//! ```json
//! {
//!   "intrinsics": "camera.json",
//!   "stride": 2,
//!   "seed": 7,
//!   "target_policy": "origin_norm",
//!   "density": { "epsilon": 10 },
//!   "prosac": { "m0": null, "delta_mm": 8, "min_support_fraction": 0.3, "max_iterations": 500, "seed": 0 },
//!   "cluster": { "epsilon_mm": 15, "mu": 12 },
//!   "control": { "tau_grasp_mm": 400, "v_close": 110, "dwell_s": 3, "frame_period_s": 0.1, "motor_enabled": true }
//! }
//! ```
//!
//! `intrinsics` is either a path (relative to the config file) or an inline
//! object. Every section is optional and falls back to its defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterParams;
use crate::control::ControlConfig;
use crate::density::DensityParams;
use crate::depth_io::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::plane_fit::ProsacParams;
use crate::scene_graph::TargetPolicy;
use crate::Threading;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntrinsicsSource {
    Inline(CameraIntrinsics),
    Path(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub intrinsics: CameraIntrinsics,
    pub stride: usize,
    pub seed: u64,
    pub target_policy: TargetPolicy,
    pub threading: Threading,
    pub density: DensityParams,
    pub prosac: ProsacParams,
    pub cluster: ClusterParams,
    pub control: ControlConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            stride: 2,
            seed: 0,
            target_policy: TargetPolicy::default(),
            threading: Threading::Single,
            density: DensityParams::default(),
            prosac: ProsacParams::default(),
            cluster: ClusterParams::default(),
            control: ControlConfig::default(),
        }
    }
}

/// On-disk layout; differs from [`PipelineConfig`] only in how intrinsics
/// are given.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    intrinsics: Option<IntrinsicsSource>,
    #[serde(default)]
    stride: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    target_policy: Option<TargetPolicy>,
    #[serde(default)]
    threading: Option<Threading>,
    #[serde(default)]
    density: Option<DensityParams>,
    #[serde(default)]
    prosac: Option<ProsacParams>,
    #[serde(default)]
    cluster: Option<ClusterParams>,
    #[serde(default)]
    control: Option<ControlConfig>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.stride == 0 {
            return Err(Error::param("stride", "must be >= 1"));
        }
        self.density.validate()?;
        self.prosac.validate()?;
        self.cluster.validate()?;
        self.control.validate()
    }

    /// Parses and validates a config document. Relative intrinsics paths are
    /// resolved against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let defaults = PipelineConfig::default();
        let intrinsics = match raw.intrinsics {
            None => defaults.intrinsics,
            Some(IntrinsicsSource::Inline(intr)) => intr,
            Some(IntrinsicsSource::Path(p)) => CameraIntrinsics::load_json(base_dir.join(p))?,
        };
        let cfg = PipelineConfig {
            intrinsics,
            stride: raw.stride.unwrap_or(defaults.stride),
            seed: raw.seed.unwrap_or(defaults.seed),
            target_policy: raw.target_policy.unwrap_or_default(),
            threading: raw.threading.unwrap_or_default(),
            density: raw.density.unwrap_or_default(),
            prosac: raw.prosac.unwrap_or_default(),
            cluster: raw.cluster.unwrap_or_default(),
            control: raw.control.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = PipelineConfig::from_json_str("{}", Path::new(".")).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn namespaced_keys() {
        let text = r#"{
            "stride": 3,
            "density": {"epsilon": 12},
            "prosac": {"delta_mm": 6, "min_support_fraction": 0.4, "max_iterations": 100, "seed": 5, "m0": 50},
            "cluster": {"epsilon_mm": 20, "mu": 8},
            "control": {"tau_grasp_mm": 500, "v_close": 120, "dwell_s": 1.5, "frame_period_s": 0.05, "motor_enabled": false},
            "target_policy": "axis_radial"
        }"#;
        let cfg = PipelineConfig::from_json_str(text, Path::new(".")).unwrap();
        assert_eq!(cfg.stride, 3);
        assert_eq!(cfg.density.epsilon, 12.0);
        assert_eq!(cfg.prosac.m0, Some(50));
        assert_eq!(cfg.cluster.mu, 8);
        assert_eq!(cfg.control.tau_grasp, 500.0);
        assert!(!cfg.control.motor_enabled);
        assert_eq!(cfg.target_policy, TargetPolicy::AxisRadial);
        // a section given partially keeps defaults for missing keys
        let cfg =
            PipelineConfig::from_json_str(r#"{"control": {"tau_grasp_mm": 300}}"#, Path::new("."))
                .unwrap();
        assert_eq!(cfg.control.v_close, 110);
    }

    #[test]
    fn tau_out_of_range() {
        let err =
            PipelineConfig::from_json_str(r#"{"control": {"tau_grasp_mm": 100}}"#, Path::new("."))
                .unwrap_err()
                .to_string();
        assert!(err.contains("(200, 10000)"), "{err}");
    }

    #[test]
    fn unknown_key_is_schema_error() {
        assert!(matches!(
            PipelineConfig::from_json_str(r#"{"strid": 2}"#, Path::new(".")),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn intrinsics_from_relative_path() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("cam.json"),
            r#"{"fx": 500, "fy": 500, "cx": 160, "cy": 120, "width": 320, "height": 240}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("cfg.json"), r#"{"intrinsics": "cam.json"}"#).unwrap();
        let cfg = PipelineConfig::load(dir.path().join("cfg.json")).unwrap();
        assert_eq!(cfg.intrinsics.width, 320);
        assert_eq!(cfg.intrinsics.depth_scale, 1.0);
    }

    #[test]
    fn stride_zero_rejected() {
        assert!(PipelineConfig::from_json_str(r#"{"stride": 0}"#, Path::new(".")).is_err());
    }
}
