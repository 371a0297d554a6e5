//! Neighborhood density, min-max confidence and confidence-descending order.

mod grid;

use serde::{Deserialize, Serialize};

pub use grid::GridIndex;

use crate::depth_io::PointCloud;
use crate::error::{Error, Result};
use crate::Threading;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityParams {
    /// Neighborhood radius in millimeters.
    pub epsilon: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self { epsilon: 10.0 }
    }
}

impl DensityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(
                "density.epsilon",
                format!("must be > 0, got {}", self.epsilon),
            ));
        }
        Ok(())
    }
}

/// A cloud with densities and confidences attached, plus the permutation that
/// visits it by descending confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedCloud {
    cloud: PointCloud,
    order: Vec<usize>,
}

impl OrderedCloud {
    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    /// Original indices sorted by confidence, highest first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The cloud rearranged into confidence order.
    pub fn to_sorted_cloud(&self) -> PointCloud {
        self.cloud.select(&self.order)
    }

    pub fn into_cloud(self) -> PointCloud {
        self.cloud
    }
}

/// Number of points within `epsilon` of each point, the point itself included.
pub fn neighborhood_density(cloud: &PointCloud, params: &DensityParams) -> Result<Vec<u32>> {
    neighborhood_density_with(cloud, params, Threading::Single)
}

pub fn neighborhood_density_with(
    cloud: &PointCloud,
    params: &DensityParams,
    threading: Threading,
) -> Result<Vec<u32>> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let grid = GridIndex::new(cloud.points(), params.epsilon);
    Ok(grid.neighbor_counts(threading))
}

/// Min-max normalized densities. When every density is equal all weights
/// are 1.
pub fn confidence_weights(densities: &[u32]) -> Vec<f64> {
    let values: Vec<f64> = densities.iter().map(|&d| d as f64).collect();
    min_max_normalize(&values)
}

/// `(x - min) / (max - min)` for each value; all ones when `max == min`.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let Some(min) = values.iter().copied().reduce(f64::min) else {
        return Vec::new();
    };
    let max = values.iter().copied().fold(min, f64::max);
    let span = max - min;
    if span <= 0.0 {
        return vec![1.0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - min) / span).clamp(0.0, 1.0))
        .collect()
}

/// Attaches `weights` as confidences and orders by them, descending, ties by
/// ascending original index.
pub fn sort_by_confidence(cloud: PointCloud, weights: Vec<f64>) -> Result<OrderedCloud> {
    if weights.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: weights.len(),
        });
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let cloud = cloud.with_confidences(weights)?;
    Ok(OrderedCloud { cloud, order })
}

/// Density, confidence and ordering in one pass.
pub fn order_by_density(
    cloud: PointCloud,
    params: &DensityParams,
    threading: Threading,
) -> Result<OrderedCloud> {
    let densities = neighborhood_density_with(&cloud, params, threading)?;
    let weights = confidence_weights(&densities);
    sort_by_confidence(cloud.with_densities(densities)?, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_density(points: &[Point3], eps: f64) -> Vec<u32> {
        points
            .iter()
            .map(|p| {
                points
                    .iter()
                    .filter(|q| {
                        let d = *p - **q;
                        d.x * d.x + d.y * d.y + d.z * d.z <= eps * eps
                    })
                    .count() as u32
            })
            .collect()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, side: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-side / 2.0..side / 2.0),
                    rng.random_range(-side / 2.0..side / 2.0),
                    rng.random_range(0.0..side),
                )
            })
            .collect()
    }

    #[test]
    fn single_point() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]);
        assert_eq!(
            neighborhood_density(&cloud, &DensityParams { epsilon: 0.1 }).unwrap(),
            vec![1]
        );
    }

    #[test]
    fn two_points_mutual() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(5.0, 0.0, 0.0)]);
        assert_eq!(
            neighborhood_density(&cloud, &DensityParams { epsilon: 10.0 }).unwrap(),
            vec![2, 2]
        );
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(matches!(
            neighborhood_density(&PointCloud::default(), &DensityParams::default()),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn uniform_cube_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_cloud(&mut rng, 100, 100.0);
        let cloud = PointCloud::new(pts.clone());
        let fast = neighborhood_density(&cloud, &DensityParams { epsilon: 20.0 }).unwrap();
        assert_eq!(fast, brute_force_density(&pts, 20.0));
    }

    #[test]
    fn grid_equals_brute_force_on_200_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=500);
            let side = rng.random_range(20.0..300.0);
            let eps = rng.random_range(1.0..40.0);
            let pts = random_cloud(&mut rng, n, side);
            let cloud = PointCloud::new(pts.clone());
            let params = DensityParams { epsilon: eps };
            let expected = brute_force_density(&pts, eps);
            assert_eq!(neighborhood_density(&cloud, &params).unwrap(), expected);
            assert_eq!(
                neighborhood_density_with(&cloud, &params, Threading::Parallel).unwrap(),
                expected
            );
        }
    }

    #[test]
    fn neighborhood_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_cloud(&mut rng, 60, 50.0);
        let grid = GridIndex::new(&pts, 12.0);
        let sets: Vec<Vec<usize>> = (0..pts.len()).map(|i| grid.neighbors_of(i)).collect();
        for (i, ni) in sets.iter().enumerate() {
            assert!(ni.contains(&i));
            for &j in ni {
                assert!(sets[j].contains(&i), "{i} sees {j} but not conversely");
            }
        }
    }

    #[test]
    fn confidence_examples() {
        let w = confidence_weights(&[5, 10, 20]);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[2], 1.0);
        assert_eq!(confidence_weights(&[7, 7, 7]), vec![1.0; 3]);
        assert_eq!(confidence_weights(&[3, 9]), vec![0.0, 1.0]);
    }

    #[test]
    fn sort_examples() {
        let cloud = PointCloud::new(vec![Point3::ORIGIN; 3]);
        let ordered = sort_by_confidence(cloud, vec![0.2, 0.9, 0.5]).unwrap();
        assert_eq!(ordered.order(), &[1, 2, 0]);

        let cloud = PointCloud::new(vec![Point3::ORIGIN; 2]);
        assert_eq!(
            sort_by_confidence(cloud, vec![0.5, 0.5]).unwrap().order(),
            &[0, 1]
        );

        let cloud = PointCloud::new(vec![Point3::ORIGIN; 2]);
        assert!(matches!(
            sort_by_confidence(cloud, vec![0.5]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn confidence_affine_invariant(
            rho in proptest::collection::vec(1u32..1000, 1..50),
            a in 0.01f64..100.0,
            b in -500.0f64..500.0,
        ) {
            let w = confidence_weights(&rho);
            let shifted: Vec<f64> = rho.iter().map(|&r| a * r as f64 + b).collect();
            let w2 = min_max_normalize(&shifted);
            for (x, y) in w.iter().zip(&w2) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn confidence_monotone_and_bounded(rho in proptest::collection::vec(0u32..100, 1..50)) {
            let w = confidence_weights(&rho);
            prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
            for i in 0..rho.len() {
                for j in 0..rho.len() {
                    if rho[i] <= rho[j] {
                        prop_assert!(w[i] <= w[j]);
                    }
                }
            }
        }

        #[test]
        fn sort_is_permutation_and_idempotent(w in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
            let pts: Vec<Point3> = (0..w.len()).map(|i| Point3::new(i as f64, 0.0, 1.0)).collect();
            let ordered = sort_by_confidence(PointCloud::new(pts), w.clone()).unwrap();
            let mut seen = ordered.order().to_vec();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..w.len()).collect::<Vec<_>>());
            for pair in ordered.order().windows(2) {
                prop_assert!(w[pair[0]] >= w[pair[1]]);
            }
            let sorted = ordered.to_sorted_cloud();
            let sorted_w = sorted.confidences().unwrap().to_vec();
            let again = sort_by_confidence(PointCloud::new(sorted.points().to_vec()), sorted_w).unwrap();
            let identity: Vec<usize> = (0..w.len()).collect();
            prop_assert_eq!(again.order(), identity.as_slice());
        }
    }
}
