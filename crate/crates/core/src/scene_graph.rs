//! Per-cluster centroids and principal axes, and grasp-target selection.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::depth_io::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{symmetric_eigen, Mat3, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    /// Cluster label this node was built from.
    pub label: usize,
    pub centroid: Point3,
    /// Principal directions, largest variance first.
    pub axes: [Point3; 3],
    /// Standard deviation along each axis, non-increasing.
    pub extents: [f64; 3],
    pub point_count: usize,
}

impl ObjectNode {
    /// Covariance rebuilt from the principal decomposition.
    pub fn covariance(&self) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (axis, extent) in self.axes.iter().zip(self.extents) {
            let e = axis.to_array();
            let var = extent * extent;
            for (i, row) in out.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell += var * e[i] * e[j];
                }
            }
        }
        Mat3(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// Smallest full Euclidean norm, i.e. nearest to the camera center.
    #[default]
    OriginNorm,
    /// Smallest distance to the optical axis, `√(x² + y²)`.
    AxisRadial,
}

impl std::str::FromStr for TargetPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "origin_norm" => Ok(TargetPolicy::OriginNorm),
            "axis_radial" => Ok(TargetPolicy::AxisRadial),
            other => Err(format!("unknown target policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: Vec<ObjectNode>,
    pub frame_timestamp: u64,
    pub target_index: Option<usize>,
}

impl SceneGraph {
    pub fn target(&self) -> Option<&ObjectNode> {
        self.target_index.map(|i| &self.nodes[i])
    }
}

/// Population mean and covariance of `points`.
pub fn mean_and_covariance(points: impl Iterator<Item = Point3> + Clone) -> (Point3, Mat3, usize) {
    let mut sum = Point3::ORIGIN;
    let mut n = 0usize;
    for p in points.clone() {
        sum += p;
        n += 1;
    }
    if n == 0 {
        return (Point3::ORIGIN, Mat3([[0.0; 3]; 3]), 0);
    }
    let mean = sum / n as f64;
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        let d = (p - mean).to_array();
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] /= n as f64;
            cov[j][i] = cov[i][j];
        }
    }
    (mean, Mat3(cov), n)
}

fn node_for(label: usize, points: &[Point3], members: &[usize]) -> ObjectNode {
    let (centroid, cov, n) = mean_and_covariance(members.iter().map(|&i| points[i]));
    let (values, vecs) = symmetric_eigen(&cov);
    ObjectNode {
        label,
        centroid,
        axes: [vecs.column(0), vecs.column(1), vecs.column(2)],
        extents: values.map(|v| v.max(0.0).sqrt()),
        point_count: n,
    }
}

/// One node per cluster, in label order. Noise points are ignored.
pub fn cluster_centroids_pca(h: &PointCloud, assignment: &ClusterAssignment) -> Result<SceneGraph> {
    if assignment.len() != h.len() {
        return Err(Error::LengthMismatch {
            expected: h.len(),
            actual: assignment.len(),
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); assignment.k()];
    for (i, &label) in assignment.labels().iter().enumerate() {
        if label >= 0 {
            members[label as usize].push(i);
        }
    }
    let nodes = members
        .iter()
        .enumerate()
        .map(|(label, m)| node_for(label, h.points(), m))
        .collect();
    Ok(SceneGraph {
        nodes,
        frame_timestamp: 0,
        target_index: None,
    })
}

fn selection_key(p: Point3, policy: TargetPolicy) -> f64 {
    match policy {
        TargetPolicy::OriginNorm => p.norm(),
        TargetPolicy::AxisRadial => (p.x * p.x + p.y * p.y).sqrt(),
    }
}

/// Marks the node with the smallest policy distance as the target (ties go
/// to the smaller index).
pub fn select_target(mut graph: SceneGraph, policy: TargetPolicy) -> SceneGraph {
    graph.target_index = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (selection_key(n.centroid, policy), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i);
    graph
}

/// Euclidean distance from the camera center to the selected target.
pub fn target_distance(graph: &SceneGraph) -> Option<f64> {
    graph.target().map(|n| n.centroid.norm())
}
