//! Grasp perception from single depth frames.
//!
//! A frame is backprojected to a point cloud, points are ranked by
//! neighborhood density, the supporting table plane is found by progressive
//! sample consensus and removed, the remaining points are clustered with
//! DBSCAN, and the cluster centroid nearest the camera becomes the grasp
//! target. The distance to that target drives a latched close command.
//!
//! [`simulator`] renders synthetic tabletop approaches with ground truth and
//! [`eval`] scores the pipeline on them.

pub mod clustering;
pub mod config;
pub mod control;
pub mod density;
pub mod depth_io;
pub mod error;
pub mod eval;
pub mod export;
pub mod geometry;
pub mod pipeline;
pub mod plane_fit;
pub mod scene_graph;
pub mod simulator;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use geometry::Point3;

/// Whether data-parallel inner loops may use the rayon pool. Results are
/// identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threading {
    #[default]
    Single,
    Parallel,
}
