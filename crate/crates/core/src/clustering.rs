//! DBSCAN over the off-plane points.
//!
//! Neighborhoods are self-inclusive and a point is core when its
//! neighborhood holds at least `mu` points. Core points reachable through
//! chains of core neighbors share a cluster. A non-core point within
//! `epsilon` of any core point joins the cluster of the nearest such core
//! point (ties: smaller core index). Everything else is noise (`-1`).
//! Clusters are numbered in order of their smallest member index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth_io::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::Threading;

pub const NOISE: i32 = -1;

/// Largest cloud accepted by [`dbscan_reference`].
pub const REFERENCE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    #[serde(rename = "epsilon_mm")]
    pub epsilon: f64,
    pub mu: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            epsilon: 15.0,
            mu: 12,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(
                "cluster.epsilon_mm",
                format!("must be > 0, got {}", self.epsilon),
            ));
        }
        if self.mu == 0 {
            return Err(Error::param("cluster.mu", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Core,
    Border,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<i32>,
    kinds: Vec<PointKind>,
    k: usize,
}

impl ClusterAssignment {
    /// Per-point label: `-1` for noise, otherwise `0..k`.
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn kinds(&self) -> &[PointKind] {
        &self.kinds
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Indices of the points in cluster `label`.
    pub fn members(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label as i32)
            .map(|(i, _)| i)
            .collect()
    }

    /// Builds the final assignment from provisional cluster ids, renumbering
    /// clusters by smallest member index.
    fn canonical(provisional: Vec<Option<usize>>, core: &[bool]) -> Self {
        let mut remap: Vec<Option<i32>> = Vec::new();
        let mut next = 0i32;
        let mut labels = Vec::with_capacity(provisional.len());
        let mut kinds = Vec::with_capacity(provisional.len());
        for (i, p) in provisional.iter().enumerate() {
            match *p {
                Some(id) => {
                    if id >= remap.len() {
                        remap.resize(id + 1, None);
                    }
                    let label = *remap[id].get_or_insert_with(|| {
                        next += 1;
                        next - 1
                    });
                    labels.push(label);
                    kinds.push(if core[i] {
                        PointKind::Core
                    } else {
                        PointKind::Border
                    });
                }
                None => {
                    labels.push(NOISE);
                    kinds.push(PointKind::Noise);
                }
            }
        }
        Self {
            labels,
            kinds,
            k: next as usize,
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots stay stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Closest core point to `p` among `candidates`, ties by smaller index.
fn nearest_core(
    p: Point3,
    points: &[Point3],
    candidates: impl Iterator<Item = usize>,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for j in candidates {
        let d = p.dist2(points[j]);
        let better = match best {
            None => true,
            Some((bd, bj)) => d < bd || (d == bd && j < bj),
        };
        if better {
            best = Some((d, j));
        }
    }
    best.map(|(_, j)| j)
}

/// Grid-indexed DBSCAN.
pub fn dbscan(h: &PointCloud, params: &ClusterParams) -> Result<ClusterAssignment> {
    dbscan_with(h, params, Threading::Single)
}

/// Cells small enough that any two points sharing one are within epsilon.
struct CoreGrid {
    /// Point indices grouped by cell.
    members: Vec<u32>,
    /// `(start, end)` into `members` per cell.
    spans: Vec<(u32, u32)>,
    /// Occupied cells within reach of each cell, itself included.
    adjacent: Vec<Vec<u32>>,
    cell_of: Vec<u32>,
}

impl CoreGrid {
    fn new(points: &[Point3], epsilon: f64) -> Self {
        // shrink slightly so rounding cannot push a same-cell pair past epsilon
        let side = epsilon / 3f64.sqrt() * (1.0 - 1e-9);
        let key = |p: &Point3| {
            (
                (p.x / side).floor() as i64,
                (p.y / side).floor() as i64,
                (p.z / side).floor() as i64,
            )
        };
        let keys: Vec<(i64, i64, i64)> = points.iter().map(key).collect();
        let mut members: Vec<u32> = (0..points.len() as u32).collect();
        members.sort_by_key(|&i| (keys[i as usize], i));
        let mut spans = Vec::new();
        let mut cell_keys = Vec::new();
        let mut cell_of = vec![0u32; points.len()];
        let mut start = 0;
        while start < members.len() {
            let k = keys[members[start] as usize];
            let mut end = start + 1;
            while end < members.len() && keys[members[end] as usize] == k {
                end += 1;
            }
            for &m in &members[start..end] {
                cell_of[m as usize] = spans.len() as u32;
            }
            spans.push((start as u32, end as u32));
            cell_keys.push(k);
            start = end;
        }
        let index: std::collections::HashMap<(i64, i64, i64), u32> = cell_keys
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i as u32))
            .collect();
        // cells k apart along an axis are at least (k - 1) * side apart there
        let reach = (epsilon / side).ceil() as i64 + 1;
        let mut offsets = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let gap = |d: i64| ((d.abs() - 1).max(0) as f64) * side;
                    let g2 = gap(dx).powi(2) + gap(dy).powi(2) + gap(dz).powi(2);
                    if g2 <= epsilon * epsilon * (1.0 + 1e-9) {
                        offsets.push((dx, dy, dz));
                    }
                }
            }
        }
        let adjacent = cell_keys
            .iter()
            .map(|&(x, y, z)| {
                offsets
                    .iter()
                    .filter_map(|&(dx, dy, dz)| index.get(&(x + dx, y + dy, z + dz)).copied())
                    .collect()
            })
            .collect();
        Self {
            members,
            spans,
            adjacent,
            cell_of,
        }
    }

    fn cell(&self, c: u32) -> &[u32] {
        let (s, e) = self.spans[c as usize];
        &self.members[s as usize..e as usize]
    }
}

pub fn dbscan_with(
    h: &PointCloud,
    params: &ClusterParams,
    threading: Threading,
) -> Result<ClusterAssignment> {
    params.validate()?;
    let points = h.points();
    let n = points.len();
    if n == 0 {
        return Ok(ClusterAssignment::canonical(Vec::new(), &[]));
    }
    let eps2 = params.epsilon * params.epsilon;
    let grid = CoreGrid::new(points, params.epsilon);
    let n_cells = grid.spans.len();

    // core test with early exit once mu neighbors are seen
    let is_core = |i: usize| {
        let c = grid.cell_of[i];
        if grid.cell(c).len() >= params.mu {
            return true;
        }
        let p = points[i];
        let mut count = 0;
        for &a in &grid.adjacent[c as usize] {
            for &j in grid.cell(a) {
                if p.dist2(points[j as usize]) <= eps2 {
                    count += 1;
                    if count >= params.mu {
                        return true;
                    }
                }
            }
        }
        false
    };
    let core: Vec<bool> = match threading {
        Threading::Single => (0..n).map(is_core).collect(),
        Threading::Parallel => (0..n).into_par_iter().map(is_core).collect(),
    };
    let core_of_cell: Vec<Vec<u32>> = (0..n_cells as u32)
        .map(|c| {
            grid.cell(c)
                .iter()
                .copied()
                .filter(|&i| core[i as usize])
                .collect()
        })
        .collect();

    // all core points of one cell are mutually reachable, so connectivity
    // only has to be decided between cells
    let mut sets = DisjointSet::new(n_cells);
    for c in 0..n_cells as u32 {
        if core_of_cell[c as usize].is_empty() {
            continue;
        }
        for &a in &grid.adjacent[c as usize] {
            if a <= c || core_of_cell[a as usize].is_empty() || sets.find(a) == sets.find(c) {
                continue;
            }
            let linked = core_of_cell[c as usize].iter().any(|&i| {
                core_of_cell[a as usize]
                    .iter()
                    .any(|&j| points[i as usize].dist2(points[j as usize]) <= eps2)
            });
            if linked {
                sets.union(c, a);
            }
        }
    }

    let mut provisional: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let c = grid.cell_of[i];
        if core[i] {
            provisional[i] = Some(sets.find(c) as usize);
            continue;
        }
        let candidates = grid.adjacent[c as usize]
            .iter()
            .flat_map(|&a| core_of_cell[a as usize].iter())
            .map(|&j| j as usize)
            .filter(|&j| points[i].dist2(points[j]) <= eps2);
        if let Some(j) = nearest_core(points[i], points, candidates) {
            provisional[i] = Some(sets.find(grid.cell_of[j]) as usize);
        }
    }
    Ok(ClusterAssignment::canonical(provisional, &core))
}

/// Exhaustive O(N²) DBSCAN with the same rules as [`dbscan`], for checking it.
pub fn dbscan_reference(h: &PointCloud, params: &ClusterParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let points = h.points();
    let n = points.len();
    if n > REFERENCE_LIMIT {
        return Err(Error::OracleTooLarge {
            limit: REFERENCE_LIMIT,
            actual: n,
        });
    }
    let eps2 = params.epsilon * params.epsilon;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| points[i].dist2(points[j]) <= eps2)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.mu).collect();

    // breadth-first expansion through core points
    let mut provisional: Vec<Option<usize>> = vec![None; n];
    let mut next_id = 0;
    for seed in 0..n {
        if !core[seed] || provisional[seed].is_some() {
            continue;
        }
        let id = next_id;
        next_id += 1;
        provisional[seed] = Some(id);
        let mut queue = std::collections::VecDeque::from([seed]);
        while let Some(c) = queue.pop_front() {
            for &j in &neighbors[c] {
                if core[j] && provisional[j].is_none() {
                    provisional[j] = Some(id);
                    queue.push_back(j);
                }
            }
        }
    }
    let core_ids = provisional.clone();
    for i in 0..n {
        if core[i] {
            continue;
        }
        let candidates = neighbors[i].iter().copied().filter(|&j| core[j]);
        if let Some(j) = nearest_core(points[i], points, candidates) {
            provisional[i] = core_ids[j];
        }
    }
    Ok(ClusterAssignment::canonical(provisional, &core))
}
