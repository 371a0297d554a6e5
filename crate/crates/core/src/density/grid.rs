//! Exact uniform-grid index for fixed-radius neighbor queries.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use rayon::prelude::*;

use crate::geometry::Point3;
use crate::Threading;

/// Multiplicative hash for packed cell keys; the default SipHash dominates
/// query time otherwise.
#[derive(Default)]
pub(crate) struct CellHasher(u64);

impl Hasher for CellHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u64(b as u64);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(5) ^ v).wrapping_mul(0x517c_c1b7_2722_0a95);
    }
}

type CellMap = HashMap<u64, (u32, u32), BuildHasherDefault<CellHasher>>;

const OFFSET: i64 = 1 << 20;

fn pack(cx: i64, cy: i64, cz: i64) -> u64 {
    // 21 bits per axis covers ±10⁶ cells, far beyond any depth-camera range
    let m = (1u64 << 21) - 1;
    (((cx + OFFSET) as u64 & m) << 42)
        | (((cy + OFFSET) as u64 & m) << 21)
        | ((cz + OFFSET) as u64 & m)
}

/// Number of points `q` with `|q - p|² <= r2`, laid out as coordinate
/// columns so the loop vectorizes. Same arithmetic as [`Point3::dist2`].
#[inline(always)]
fn count_within(p: Point3, xs: &[f64], ys: &[f64], zs: &[f64], r2: f64) -> u32 {
    let mut count = 0u32;
    for ((&x, &y), &z) in xs.iter().zip(ys).zip(zs) {
        let (dx, dy, dz) = (p.x - x, p.y - y, p.z - z);
        count += (dx * dx + dy * dy + dz * dz <= r2) as u32;
    }
    count
}

/// Like [`count_within`], additionally adding one to `marks[k]` for every
/// point `k` that is within range.
#[inline(always)]
fn count_and_mark(
    p: Point3,
    xs: &[f64],
    ys: &[f64],
    zs: &[f64],
    r2: f64,
    marks: &mut [u32],
) -> u32 {
    let mut count = 0u32;
    for (((&x, &y), &z), mark) in xs.iter().zip(ys).zip(zs).zip(marks) {
        let (dx, dy, dz) = (p.x - x, p.y - y, p.z - z);
        let hit = (dx * dx + dy * dy + dz * dz <= r2) as u32;
        *mark += hit;
        count += hit;
    }
    count
}

/// The 13 cell offsets lexicographically after `(0, 0, 0)`; together with
/// the cell itself they visit every neighboring cell pair exactly once.
const FORWARD: [(i64, i64, i64); 13] = [
    (0, 0, 1),
    (0, 1, -1),
    (0, 1, 0),
    (0, 1, 1),
    (1, -1, -1),
    (1, -1, 0),
    (1, -1, 1),
    (1, 0, -1),
    (1, 0, 0),
    (1, 0, 1),
    (1, 1, -1),
    (1, 1, 0),
    (1, 1, 1),
];

/// Points bucketed into cubic cells of side `radius`. A radius query only has
/// to look at the 27 cells around the query point's cell.
pub struct GridIndex {
    radius: f64,
    radius2: f64,
    cells: CellMap,
    /// Cell keys in ascending order with their ranges into `sorted_*`.
    cell_order: Vec<(i64, i64, i64, u32, u32)>,
    sorted_points: Vec<Point3>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    sorted_index: Vec<u32>,
    slot_of: Vec<u32>,
    cell_of_point: Vec<(i64, i64, i64)>,
}

impl GridIndex {
    /// Builds the index. `radius` must be positive and finite.
    pub fn new(points: &[Point3], radius: f64) -> Self {
        assert!(
            radius > 0.0 && radius.is_finite(),
            "grid radius must be positive"
        );
        let cell_of_point: Vec<(i64, i64, i64)> = points
            .iter()
            .map(|p| {
                (
                    (p.x / radius).floor() as i64,
                    (p.y / radius).floor() as i64,
                    (p.z / radius).floor() as i64,
                )
            })
            .collect();
        let mut sorted_index: Vec<u32> = (0..points.len() as u32).collect();
        sorted_index.sort_by_key(|&i| (cell_of_point[i as usize], i));

        let sorted_points: Vec<Point3> = sorted_index.iter().map(|&i| points[i as usize]).collect();
        let mut slot_of = vec![0u32; points.len()];
        for (slot, &i) in sorted_index.iter().enumerate() {
            slot_of[i as usize] = slot as u32;
        }
        let mut cells = CellMap::default();
        let mut cell_order = Vec::new();
        let mut start = 0usize;
        while start < sorted_index.len() {
            let key = cell_of_point[sorted_index[start] as usize];
            let mut end = start + 1;
            while end < sorted_index.len() && cell_of_point[sorted_index[end] as usize] == key {
                end += 1;
            }
            cells.insert(pack(key.0, key.1, key.2), (start as u32, end as u32));
            cell_order.push((key.0, key.1, key.2, start as u32, end as u32));
            start = end;
        }

        Self {
            radius,
            radius2: radius * radius,
            cells,
            cell_order,
            xs: sorted_points.iter().map(|p| p.x).collect(),
            ys: sorted_points.iter().map(|p| p.y).collect(),
            zs: sorted_points.iter().map(|p| p.z).collect(),
            sorted_points,
            sorted_index,
            slot_of,
            cell_of_point,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.sorted_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_index.is_empty()
    }

    fn neighbor_ranges(&self, key: (i64, i64, i64), out: &mut Vec<(u32, u32)>) {
        out.clear();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(&r) = self.cells.get(&pack(key.0 + dx, key.1 + dy, key.2 + dz)) {
                        out.push(r);
                    }
                }
            }
        }
    }

    /// Indices (into the original slice) of all points within the radius of
    /// point `i`, itself included, in ascending index order.
    pub fn neighbors_of(&self, i: usize) -> Vec<usize> {
        let p = self.point(i);
        let mut ranges = Vec::with_capacity(27);
        self.neighbor_ranges(self.cell_of_point[i], &mut ranges);
        let mut out = Vec::new();
        for (s, e) in ranges {
            for k in s as usize..e as usize {
                if p.dist2(self.sorted_points[k]) <= self.radius2 {
                    out.push(self.sorted_index[k] as usize);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn point(&self, i: usize) -> Point3 {
        self.sorted_points[self.slot_of[i] as usize]
    }

    /// Neighbor count (self-inclusive) for every indexed point.
    pub fn neighbor_counts(&self, threading: Threading) -> Vec<u32> {
        let per_cell = |&(cx, cy, cz, s, e): &(i64, i64, i64, u32, u32)| {
            let mut ranges = Vec::with_capacity(27);
            self.neighbor_ranges((cx, cy, cz), &mut ranges);
            (s as usize..e as usize)
                .map(|k| {
                    let p = self.sorted_points[k];
                    ranges
                        .iter()
                        .map(|&(rs, re)| {
                            let r = rs as usize..re as usize;
                            count_within(
                                p,
                                &self.xs[r.clone()],
                                &self.ys[r.clone()],
                                &self.zs[r],
                                self.radius2,
                            )
                        })
                        .sum::<u32>()
                })
                .collect::<Vec<u32>>()
        };
        let sorted_counts: Vec<u32> = match threading {
            Threading::Single => self.half_stencil_counts(),
            Threading::Parallel => self.cell_order.par_iter().map(per_cell).flatten().collect(),
        };
        let mut counts = vec![0u32; self.len()];
        for (slot, c) in sorted_counts.into_iter().enumerate() {
            counts[self.sorted_index[slot] as usize] = c;
        }
        counts
    }

    fn half_stencil_counts(&self) -> Vec<u32> {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { self.half_stencil_counts_avx2() };
        }
        self.half_stencil_counts_impl()
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn half_stencil_counts_avx2(&self) -> Vec<u32> {
        self.half_stencil_counts_impl()
    }

    /// Sequential counts in sorted-slot order, testing each pair once.
    #[inline(always)]
    fn half_stencil_counts_impl(&self) -> Vec<u32> {
        let r2 = self.radius2;
        let mut counts = vec![1u32; self.len()];
        for &(cx, cy, cz, s, e) in &self.cell_order {
            let (s, e) = (s as usize, e as usize);
            for a in s..e {
                let p = self.sorted_points[a];
                let (head, tail) = counts.split_at_mut(a + 1);
                let r = a + 1..e;
                head[a] += count_and_mark(
                    p,
                    &self.xs[r.clone()],
                    &self.ys[r.clone()],
                    &self.zs[r],
                    r2,
                    &mut tail[..e - a - 1],
                );
            }
            for (dx, dy, dz) in FORWARD {
                let Some(&(rs, re)) = self.cells.get(&pack(cx + dx, cy + dy, cz + dz)) else {
                    continue;
                };
                let r = rs as usize..re as usize;
                for a in s..e {
                    let p = self.sorted_points[a];
                    let hits = count_and_mark(
                        p,
                        &self.xs[r.clone()],
                        &self.ys[r.clone()],
                        &self.zs[r.clone()],
                        r2,
                        &mut counts[r.clone()],
                    );
                    counts[a] += hits;
                }
            }
        }
        counts
    }

    /// Calls `f(j)` for every indexed point within the radius of `p`.
    pub fn for_each_within(&self, p: Point3, mut f: impl FnMut(usize)) {
        let key = (
            (p.x / self.radius).floor() as i64,
            (p.y / self.radius).floor() as i64,
            (p.z / self.radius).floor() as i64,
        );
        let mut ranges = Vec::with_capacity(27);
        self.neighbor_ranges(key, &mut ranges);
        for (s, e) in ranges {
            for k in s as usize..e as usize {
                if p.dist2(self.sorted_points[k]) <= self.radius2 {
                    f(self.sorted_index[k] as usize);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_coordinates_and_cell_edges() {
        let pts = vec![
            Point3::new(-0.5, 0.0, 0.0),
            Point3::new(0.5, 0.0, 0.0),
            Point3::new(-1.5, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
        ];
        let grid = GridIndex::new(&pts, 1.0);
        assert_eq!(grid.neighbors_of(0), vec![0, 1, 2]);
        assert_eq!(grid.neighbors_of(1), vec![0, 1, 3]);
        assert_eq!(grid.neighbor_counts(Threading::Single), vec![3, 3, 2, 2]);
    }
}
