//! Segmented clouds as colored ASCII PLY and scene graphs as JSON lines.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::pipeline::Perception;
use crate::scene_graph::SceneGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Plane,
    Cluster(usize),
    Noise,
}

impl PointLabel {
    /// Integer written to the `label` property: -2 plane, -1 noise, else the
    /// cluster label.
    pub fn code(self) -> i32 {
        match self {
            PointLabel::Plane => -2,
            PointLabel::Noise => -1,
            PointLabel::Cluster(k) => k as i32,
        }
    }

    pub fn color(self) -> [u8; 3] {
        const PALETTE: [[u8; 3]; 8] = [
            [230, 25, 75],
            [60, 180, 75],
            [0, 130, 200],
            [245, 130, 48],
            [145, 30, 180],
            [70, 240, 240],
            [240, 50, 230],
            [210, 245, 60],
        ];
        match self {
            PointLabel::Plane => [160, 160, 160],
            PointLabel::Noise => [20, 20, 20],
            PointLabel::Cluster(k) => PALETTE[k % PALETTE.len()],
        }
    }
}

/// Label of every point of `p.cloud`.
pub fn point_labels(p: &Perception) -> Vec<PointLabel> {
    let mut labels = vec![PointLabel::Plane; p.cloud.len()];
    for (&i, &l) in p.off_plane.iter().zip(p.clusters.labels()) {
        labels[i] = if l < 0 {
            PointLabel::Noise
        } else {
            PointLabel::Cluster(l as usize)
        };
    }
    labels
}

pub fn write_ply<W: Write>(
    mut w: W,
    points: &[Point3],
    labels: &[PointLabel],
) -> std::io::Result<()> {
    assert_eq!(points.len(), labels.len(), "one label per point");
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", points.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(
        w,
        "property uchar red\nproperty uchar green\nproperty uchar blue"
    )?;
    writeln!(w, "property int label\nend_header")?;
    for (p, l) in points.iter().zip(labels) {
        let [r, g, b] = l.color();
        writeln!(w, "{} {} {} {r} {g} {b} {}", p.x, p.y, p.z, l.code())?;
    }
    w.flush()
}

pub fn write_ply_file(path: impl AsRef<Path>, p: &Perception) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ply(
        std::io::BufWriter::new(file),
        p.cloud.points(),
        &point_labels(p),
    )
    .map_err(|e| Error::io(path, e))
}

/// The scene graph as a single JSON line.
pub fn scene_graph_json_line(graph: &SceneGraph) -> String {
    serde_json::to_string(graph).expect("scene graph serializes")
}
