//! Dominant-plane extraction by progressive sample consensus.
//!
//! Minimal samples are drawn from the top `m(n) = min(N, m0 + n)` points of
//! the confidence-ordered cloud, so early hypotheses come from the densest
//! (most plane-like) points and the pool widens by one point per iteration.
//! Every hypothesis is scored against the whole cloud.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::OrderedCloud;
use crate::depth_io::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Plane `a·x + b·y + c·z + d = 0` with unit normal `(a, b, c)`, `d` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Number of cloud points within the inlier threshold.
    pub support: usize,
}

impl PlaneModel {
    pub fn normal(&self) -> Point3 {
        Point3::new(self.a, self.b, self.c)
    }

    #[inline]
    fn signed_numerator(&self, p: Point3) -> f64 {
        self.a * p.x + self.b * p.y + self.c * p.z + self.d
    }

    #[inline]
    fn coefficient_norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c).sqrt()
    }
}

/// How the sampling pool evolves across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Pool grows from the `m0` most confident points.
    #[default]
    Progressive,
    /// Plain RANSAC: every iteration samples from the whole cloud.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProsacParams {
    /// Initial pool size. `None` selects `max(3, N / 4)` per cloud; a fixed
    /// value larger than the cloud is capped at `N`.
    #[serde(default)]
    pub m0: Option<usize>,
    /// Inlier distance threshold in mm.
    #[serde(rename = "delta_mm")]
    pub delta: f64,
    pub min_support_fraction: f64,
    pub max_iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl Default for ProsacParams {
    fn default() -> Self {
        Self {
            m0: None,
            delta: 8.0,
            min_support_fraction: 1.0,
            max_iterations: 500,
            seed: 0,
            sampling: Sampling::Progressive,
        }
    }
}

impl ProsacParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(m0) = self.m0 {
            if m0 < 3 {
                return Err(Error::param("prosac.m0", format!("must be >= 3, got {m0}")));
            }
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param(
                "prosac.delta_mm",
                format!("must be > 0, got {}", self.delta),
            ));
        }
        if !(self.min_support_fraction > 0.0 && self.min_support_fraction <= 1.0) {
            return Err(Error::param(
                "prosac.min_support_fraction",
                format!("must lie in (0, 1], got {}", self.min_support_fraction),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("prosac.max_iterations", "must be >= 1"));
        }
        Ok(())
    }

    /// Initial pool size for a cloud of `n` points.
    pub fn initial_range(&self, n: usize) -> usize {
        self.m0.unwrap_or((n / 4).max(3)).min(n)
    }
}

/// Pool size at iteration `n` (0-based).
pub fn sampling_range(m0: usize, n: usize, total: usize) -> usize {
    total.min(m0.saturating_add(n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub model: PlaneModel,
    /// Original cloud indices within `delta` of the model, ascending.
    pub inliers: Vec<usize>,
    /// Iterations consumed, including rejected degenerate samples.
    pub iterations: usize,
    /// Whether the support threshold was met before the iteration cap.
    pub converged: bool,
}

/// Plane through three points; the normal is `(b - a) × (c - a)` scaled to
/// unit length. Support is left at 0.
pub fn plane_from_three_points(pa: Point3, pb: Point3, pc: Point3) -> Result<PlaneModel> {
    let l = (pb - pa).cross(pc - pa);
    let len = l.norm();
    if !(len > 1e-9) {
        return Err(Error::Collinear);
    }
    let n = l / len;
    Ok(PlaneModel {
        a: n.x,
        b: n.y,
        c: n.z,
        d: -(n.x * pa.x + n.y * pa.y + n.z * pa.z),
        support: 0,
    })
}

/// `|A·x + B·y + C·z + D| / √(A² + B² + C²)`.
#[inline]
pub fn point_plane_distance(p: Point3, plane: &PlaneModel) -> f64 {
    plane.signed_numerator(p).abs() / plane.coefficient_norm()
}

/// Point coordinates as separate columns, which lets the support count
/// vectorize.
struct Columns {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Columns {
    fn new(points: &[Point3]) -> Self {
        Self {
            x: points.iter().map(|p| p.x).collect(),
            y: points.iter().map(|p| p.y).collect(),
            z: points.iter().map(|p| p.z).collect(),
        }
    }
}

/// Same decision as `point_plane_distance(p) <= delta` for every point. The
/// division is only evaluated for points whose numerator lies within a
/// relative 1e-12 of the threshold; elsewhere a multiplication settles it.
#[inline(always)]
fn count_support_impl(cols: &Columns, plane: &PlaneModel, delta: f64) -> usize {
    let norm = plane.coefficient_norm();
    let (lo, hi) = (delta * norm * (1.0 - 1e-12), delta * norm * (1.0 + 1e-12));
    let (a, b, c, d) = (plane.a, plane.b, plane.c, plane.d);
    let mut count = 0usize;
    let mut borderline = 0usize;
    for ((&x, &y), &z) in cols.x.iter().zip(&cols.y).zip(&cols.z) {
        let v = (a * x + b * y + c * z + d).abs();
        count += (v <= lo) as usize;
        borderline += ((v > lo) & (v <= hi)) as usize;
    }
    if borderline > 0 {
        for ((&x, &y), &z) in cols.x.iter().zip(&cols.y).zip(&cols.z) {
            let v = (a * x + b * y + c * z + d).abs();
            if v > lo && v <= hi && v / norm <= delta {
                count += 1;
            }
        }
    }
    count
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn count_support_avx2(cols: &Columns, plane: &PlaneModel, delta: f64) -> usize {
    count_support_impl(cols, plane, delta)
}

fn count_support(cols: &Columns, plane: &PlaneModel, delta: f64) -> usize {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { count_support_avx2(cols, plane, delta) };
    }
    count_support_impl(cols, plane, delta)
}

/// Indices of points within `delta` of `plane`.
pub fn plane_inliers(cloud: &PointCloud, plane: &PlaneModel, delta: f64) -> Vec<usize> {
    cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, &p)| point_plane_distance(p, plane) <= delta)
        .map(|(i, _)| i)
        .collect()
}

fn sample_three(rng: &mut ChaCha8Rng, range: usize) -> [usize; 3] {
    let i = rng.random_range(0..range);
    let mut j = rng.random_range(0..range);
    while j == i {
        j = rng.random_range(0..range);
    }
    let mut k = rng.random_range(0..range);
    while k == i || k == j {
        k = rng.random_range(0..range);
    }
    [i, j, k]
}

/// Finds the plane with maximum support, stopping once support reaches
/// `min_support_fraction · N` or after `max_iterations`.
pub fn fit_plane_prosac(ordered: &OrderedCloud, params: &ProsacParams) -> Result<PlaneFit> {
    params.validate()?;
    let points = ordered.cloud().points();
    let total = points.len();
    if total < 3 {
        return Err(Error::TooFewPoints(total));
    }
    let order = ordered.order();
    let m0 = match params.sampling {
        Sampling::Progressive => params.initial_range(total),
        Sampling::Uniform => total,
    };
    let required = params.min_support_fraction * total as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cols = Columns::new(points);

    let mut best: Option<PlaneModel> = None;
    let mut iterations = 0;
    let mut converged = false;
    for n in 0..params.max_iterations {
        iterations = n + 1;
        let range = sampling_range(m0, n, total);
        let [i, j, k] = sample_three(&mut rng, range);
        let Ok(mut model) =
            plane_from_three_points(points[order[i]], points[order[j]], points[order[k]])
        else {
            continue;
        };
        model.support = count_support(&cols, &model, params.delta);
        if best.is_none_or(|b| model.support > b.support) {
            best = Some(model);
        }
        if best.is_some_and(|b| b.support as f64 >= required) {
            converged = true;
            break;
        }
    }

    let model = best
        .filter(|m| m.support >= 3)
        .ok_or(Error::NoPlaneFound { iterations })?;
    let inliers = plane_inliers(ordered.cloud(), &model, params.delta);
    debug_assert_eq!(inliers.len(), model.support);
    Ok(PlaneFit {
        model,
        inliers,
        iterations,
        converged,
    })
}

/// The off-plane remainder: points farther than `delta` from `plane`, in
/// their original order.
pub fn remove_plane(cloud: &PointCloud, plane: &PlaneModel, delta: f64) -> PointCloud {
    let keep: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, &p)| point_plane_distance(p, plane) > delta)
        .map(|(i, _)| i)
        .collect();
    cloud.select(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{order_by_density, sort_by_confidence, DensityParams};
    use crate::geometry::unsigned_angle_deg;
    use crate::Threading;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand_distr::{Distribution, Normal};

    fn xy_plane() -> PlaneModel {
        plane_from_three_points(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        )
        .unwrap()
    }

    fn uniform_order(points: Vec<Point3>) -> OrderedCloud {
        let n = points.len();
        sort_by_confidence(PointCloud::new(points), vec![1.0; n]).unwrap()
    }

    /// Independent recount with the plane equation written out.
    fn recount(points: &[Point3], m: &PlaneModel, delta: f64) -> usize {
        points
            .iter()
            .filter(|p| {
                let num = (m.a * p.x + m.b * p.y + m.c * p.z + m.d).abs();
                num / (m.a * m.a + m.b * m.b + m.c * m.c).sqrt() <= delta
            })
            .count()
    }

    #[test]
    fn canonical_planes() {
        let p = xy_plane();
        assert_eq!((p.a, p.b, p.c.abs(), p.d), (0.0, 0.0, 1.0, 0.0));

        let p = plane_from_three_points(
            Point3::new(0.0, 0.0, 5.0),
            Point3::new(1.0, 0.0, 5.0),
            Point3::new(0.0, 1.0, 5.0),
        )
        .unwrap();
        assert_eq!(p.c.abs(), 1.0);
        assert_eq!(p.d.abs(), 5.0);

        assert!(matches!(
            plane_from_three_points(
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0)
            ),
            Err(Error::Collinear)
        ));
    }

    #[test]
    fn axis_aligned_distance() {
        assert_eq!(
            point_plane_distance(Point3::new(3.0, 4.0, 5.0), &xy_plane()),
            5.0
        );
    }

    #[test]
    fn tilted_plane_distance_matches_hand_arithmetic() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plane = plane_from_three_points(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, s, s),
        )
        .unwrap();
        // normal is ±(0, -1/√2, 1/√2) through the origin
        let p = Point3::new(12.5, -3.0, 7.25);
        let expected = (-p.y + p.z).abs() / 2f64.sqrt();
        assert!((point_plane_distance(p, &plane) - expected).abs() < 1e-12);
    }

    #[test]
    fn remove_plane_threshold() {
        let cloud = PointCloud::new(
            [2.0, 10.0, 3.0, 700.0]
                .iter()
                .map(|&z| Point3::new(1.0, 1.0, z))
                .collect(),
        );
        let h = remove_plane(&cloud, &xy_plane(), 5.0);
        let zs: Vec<f64> = h.points().iter().map(|p| p.z).collect();
        assert_eq!(zs, vec![10.0, 700.0]);

        let on_plane = PointCloud::new(vec![Point3::new(1.0, 2.0, 0.0); 4]);
        assert!(remove_plane(&on_plane, &xy_plane(), 5.0).is_empty());

        let far = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 50.0),
            Point3::new(0.0, 0.0, -60.0),
        ]);
        assert_eq!(remove_plane(&far, &xy_plane(), 5.0), far);
    }

    #[test]
    fn exact_plane_full_support_first_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..400)
            .map(|_| {
                Point3::new(
                    rng.random_range(-90.0..90.0),
                    rng.random_range(-90.0..90.0),
                    500.0,
                )
            })
            .collect();
        let ordered = uniform_order(pts);
        let fit = fit_plane_prosac(&ordered, &ProsacParams::default()).unwrap();
        assert_eq!(fit.model.support, 400);
        assert_eq!(fit.iterations, 1);
        assert!(fit.converged);
    }

    fn plane_with_outliers(seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Point3> = (0..1000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-200.0..200.0),
                    rng.random_range(-200.0..200.0),
                    500.0,
                )
            })
            .collect();
        pts.extend((0..100).map(|_| {
            Point3::new(
                rng.random_range(-200.0..200.0),
                rng.random_range(-200.0..200.0),
                rng.random_range(300.0..480.0),
            )
        }));
        pts
    }

    #[test]
    fn recovers_plane_among_outliers() {
        let pts = plane_with_outliers(1);
        let ordered = order_by_density(
            PointCloud::new(pts.clone()),
            &DensityParams { epsilon: 30.0 },
            Threading::Single,
        )
        .unwrap();
        let params = ProsacParams {
            delta: 5.0,
            ..Default::default()
        };
        let fit = fit_plane_prosac(&ordered, &params).unwrap();
        assert!(unsigned_angle_deg(fit.model.normal(), Point3::new(0.0, 0.0, 1.0)) < 1.0);
        assert!(fit.model.support >= 1000);
        assert_eq!(fit.model.support, recount(&pts, &fit.model, 5.0));
        assert_eq!(fit.inliers.len(), fit.model.support);
        let h = remove_plane(ordered.cloud(), &fit.model, 5.0);
        assert_eq!(fit.inliers.len() + h.len(), pts.len());
    }

    #[test]
    fn seeded_determinism() {
        let pts = plane_with_outliers(2);
        let ordered = order_by_density(
            PointCloud::new(pts),
            &DensityParams { epsilon: 30.0 },
            Threading::Single,
        )
        .unwrap();
        let params = ProsacParams {
            seed: 99,
            min_support_fraction: 1.0,
            max_iterations: 50,
            ..Default::default()
        };
        let a = fit_plane_prosac(&ordered, &params).unwrap();
        let b = fit_plane_prosac(&ordered, &params).unwrap();
        assert_eq!(a.model.a.to_bits(), b.model.a.to_bits());
        assert_eq!(a.model.d.to_bits(), b.model.d.to_bits());
        assert_eq!(a, b);
        assert_eq!(a.iterations, 50);
        assert!(!a.converged);
    }

    #[test]
    fn noise_free_plane_angular_error_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Point3::new(0.3, -0.5, 1.0).normalized().unwrap();
        let u = normal
            .cross(Point3::new(1.0, 0.0, 0.0))
            .normalized()
            .unwrap();
        let v = normal.cross(u);
        let center = Point3::new(10.0, 20.0, 450.0);
        let pts: Vec<Point3> = (0..2000)
            .map(|_| {
                center + u * rng.random_range(-150.0..150.0) + v * rng.random_range(-150.0..150.0)
            })
            .collect();
        let ordered = uniform_order(pts);
        let fit = fit_plane_prosac(&ordered, &ProsacParams::default()).unwrap();
        assert!(unsigned_angle_deg(fit.model.normal(), normal) < 0.1);
    }

    #[test]
    fn samples_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for range in 3..40 {
            for _ in 0..50 {
                let s = sample_three(&mut rng, range);
                assert!(s.iter().all(|&i| i < range));
                assert!(s[0] != s[1] && s[1] != s[2] && s[0] != s[2]);
            }
        }
    }

    #[test]
    fn too_few_points() {
        let ordered = uniform_order(vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)]);
        assert!(matches!(
            fit_plane_prosac(&ordered, &ProsacParams::default()),
            Err(Error::TooFewPoints(2))
        ));
    }

    #[test]
    fn all_collinear_reports_no_plane() {
        let ordered = uniform_order((0..10).map(|i| Point3::new(i as f64, 0.0, 1.0)).collect());
        let params = ProsacParams {
            max_iterations: 20,
            ..Default::default()
        };
        assert!(matches!(
            fit_plane_prosac(&ordered, &params),
            Err(Error::NoPlaneFound { iterations: 20 })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(ProsacParams {
            m0: Some(2),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ProsacParams {
            delta: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ProsacParams {
            min_support_fraction: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ProsacParams {
            max_iterations: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(ProsacParams::default().initial_range(1000), 250);
        assert_eq!(ProsacParams::default().initial_range(10), 3);
    }

    proptest! {
        #[test]
        fn sampling_range_monotone_and_capped(m0 in 3usize..100, total in 3usize..500) {
            let m0 = m0.min(total);
            let mut prev = 0;
            for n in 0..600 {
                let m = sampling_range(m0, n, total);
                prop_assert!(m >= prev && m <= total && m >= m0);
                prev = m;
            }
        }

        #[test]
        fn generating_points_lie_on_plane(
            a in proptest::array::uniform3(-1000.0f64..1000.0),
            b in proptest::array::uniform3(-1000.0f64..1000.0),
            c in proptest::array::uniform3(-1000.0f64..1000.0),
        ) {
            let (a, b, c) = (Point3::from(a), Point3::from(b), Point3::from(c));
            if let Ok(plane) = plane_from_three_points(a, b, c) {
                prop_assert!((plane.a * plane.a + plane.b * plane.b + plane.c * plane.c - 1.0).abs() < 1e-9);
                for p in [a, b, c] {
                    prop_assert!(point_plane_distance(p, &plane) <= 1e-6);
                }
            }
        }

        #[test]
        fn support_matches_recount_and_partitions(seed in 0u64..1000, delta in 1.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 3.0).unwrap();
            let pts: Vec<Point3> = (0..300)
                .map(|i| {
                    let x = rng.random_range(-100.0..100.0);
                    let y = rng.random_range(-100.0..100.0);
                    let z = if i % 4 == 0 { rng.random_range(200.0..400.0) } else { 400.0 + noise.sample(&mut rng) };
                    Point3::new(x, y, z)
                })
                .collect();
            let ordered = uniform_order(pts.clone());
            let params = ProsacParams { delta, seed, max_iterations: 30, ..Default::default() };
            let fit = fit_plane_prosac(&ordered, &params).unwrap();
            prop_assert_eq!(fit.model.support, recount(&pts, &fit.model, delta));
            let h = remove_plane(ordered.cloud(), &fit.model, delta);
            prop_assert_eq!(fit.inliers.len() + h.len(), pts.len());
        }
    }
}
