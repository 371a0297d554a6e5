//! One depth frame in, one scene graph and servo command out.

use serde::{Deserialize, Serialize};

use crate::clustering::{dbscan_with, ClusterAssignment};
use crate::config::PipelineConfig;
use crate::control::{step_vision, ControllerState, Phase};
use crate::density::order_by_density;
use crate::depth_io::{backproject, DepthFrame, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::plane_fit::{fit_plane_prosac, PlaneFit};
use crate::scene_graph::{cluster_centroids_pca, select_target, target_distance, SceneGraph};

/// Everything computed for a frame before the control step.
#[derive(Debug, Clone)]
pub struct Perception {
    pub cloud: PointCloud,
    /// `None` when the cloud was too small or no plane had support >= 3.
    pub plane: Option<PlaneFit>,
    /// Indices into `cloud` of the points left after plane removal.
    pub off_plane: Vec<usize>,
    /// Cluster labels for the `off_plane` points.
    pub clusters: ClusterAssignment,
    pub graph: SceneGraph,
    pub distance: Option<f64>,
    pub prosac_seed: u64,
}

impl Perception {
    pub fn target(&self) -> Option<Point3> {
        self.graph.target().map(|n| n.centroid)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// PROSAC seed for the frame with `timestamp`, derived from the run seeds.
pub fn frame_seed(cfg: &PipelineConfig, timestamp: u64) -> u64 {
    splitmix64(cfg.seed ^ splitmix64(cfg.prosac.seed ^ splitmix64(timestamp)))
}

pub fn perceive(frame: &DepthFrame, cfg: &PipelineConfig) -> Result<Perception> {
    let cloud = backproject(frame, &cfg.intrinsics, cfg.stride)?;
    let prosac_seed = frame_seed(cfg, frame.timestamp);
    let mut plane = None;
    let mut cloud = cloud;
    if cloud.len() >= 3 {
        let ordered = order_by_density(cloud, &cfg.density, cfg.threading)?;
        let params = crate::plane_fit::ProsacParams {
            seed: prosac_seed,
            ..cfg.prosac
        };
        match fit_plane_prosac(&ordered, &params) {
            Ok(fit) => plane = Some(fit),
            Err(Error::NoPlaneFound { .. }) => {}
            Err(e) => return Err(e),
        }
        cloud = ordered.into_cloud();
    }
    let off_plane: Vec<usize> = match &plane {
        Some(fit) => {
            let mut is_inlier = vec![false; cloud.len()];
            for &i in &fit.inliers {
                is_inlier[i] = true;
            }
            (0..cloud.len()).filter(|&i| !is_inlier[i]).collect()
        }
        None => (0..cloud.len()).collect(),
    };
    let h = PointCloud::new(off_plane.iter().map(|&i| cloud.points()[i]).collect());
    let clusters = dbscan_with(&h, &cfg.cluster, cfg.threading)?;
    let mut graph = select_target(cluster_centroids_pca(&h, &clusters)?, cfg.target_policy);
    graph.frame_timestamp = frame.timestamp;
    let distance = target_distance(&graph);
    Ok(Perception {
        cloud,
        plane,
        off_plane,
        clusters,
        graph,
        distance,
        prosac_seed,
    })
}

/// One line of the run record stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub timestamp: u64,
    /// Points after backprojection.
    pub n_points: usize,
    pub plane_support: usize,
    /// Plane coefficients `[a, b, c, d]` when a plane was found.
    pub plane: Option<[f64; 4]>,
    pub plane_iterations: usize,
    /// Number of clusters.
    pub k: usize,
    pub target: Option<Point3>,
    pub distance: Option<f64>,
    pub phase: Phase,
    pub command: i32,
    pub dwell_elapsed: f64,
    pub prosac_seed: u64,
}

/// Perception plus the stateful controller.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    state: ControllerState,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: ControllerState::new(cfg.control.motor_enabled),
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn process(&mut self, frame: &DepthFrame) -> Result<FrameRecord> {
        self.process_full(frame).map(|(record, _)| record)
    }

    pub fn process_full(&mut self, frame: &DepthFrame) -> Result<(FrameRecord, Perception)> {
        let p = perceive(frame, &self.cfg)?;
        let (state, command) = step_vision(self.state, p.distance, &self.cfg.control);
        self.state = state;
        let record = FrameRecord {
            timestamp: frame.timestamp,
            n_points: p.cloud.len(),
            plane_support: p.plane.as_ref().map_or(0, |f| f.model.support),
            plane: p
                .plane
                .as_ref()
                .map(|f| [f.model.a, f.model.b, f.model.c, f.model.d]),
            plane_iterations: p.plane.as_ref().map_or(0, |f| f.iterations),
            k: p.graph.nodes.len(),
            target: p.target(),
            distance: p.distance,
            phase: state.phase,
            command,
            dwell_elapsed: state.dwell_elapsed,
            prosac_seed: p.prosac_seed,
        };
        Ok((record, p))
    }
}
