//! Closed-form ray intersections and signed distances for the scene
//! primitives.
//!
//! Rays are `origin + t · dir` with `dir` not necessarily unit length, so the
//! returned `t` is in units of `dir`. The renderer passes the camera-frame
//! direction `(x/z, y/z, 1)` rotated into the scene, which makes `t` the
//! depth along the optical axis.

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Point3};

/// Intersections closer than this (in units of the ray parameter) are ignored.
const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: Point3,
        radius: f64,
    },
    /// Finite capped cylinder from `base` along the unit `axis`.
    Cylinder {
        base: Point3,
        axis: Point3,
        radius: f64,
        height: f64,
    },
    /// Oriented box; `orientation` maps box-local axes to the scene.
    Box {
        center: Point3,
        half_extents: [f64; 3],
        orientation: Mat3,
    },
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a <= 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    let (mut r0, mut r1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    if r0 > r1 {
        std::mem::swap(&mut r0, &mut r1);
    }
    Some((r0, r1))
}

impl Primitive {
    /// Smallest `t > 0` where the ray meets the surface.
    pub fn intersect(&self, origin: Point3, dir: Point3) -> Option<f64> {
        match *self {
            Primitive::Sphere { center, radius } => {
                let oc = origin - center;
                let (t0, t1) = smallest_positive_root(
                    dir.dot(dir),
                    2.0 * dir.dot(oc),
                    oc.dot(oc) - radius * radius,
                )?;
                [t0, t1].into_iter().find(|&t| t > T_MIN)
            }
            Primitive::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let w = origin - base;
                let (wa, da) = (w.dot(axis), dir.dot(axis));
                let w_perp = w - axis * wa;
                let d_perp = dir - axis * da;
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > T_MIN && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                if let Some((t0, t1)) = smallest_positive_root(
                    d_perp.dot(d_perp),
                    2.0 * d_perp.dot(w_perp),
                    w_perp.dot(w_perp) - radius * radius,
                ) {
                    for t in [t0, t1] {
                        let s = wa + t * da;
                        if (0.0..=height).contains(&s) {
                            consider(t);
                        }
                    }
                }
                if da != 0.0 {
                    for cap in [0.0, height] {
                        let t = (cap - wa) / da;
                        let r = w_perp + d_perp * t;
                        if r.norm_squared() <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
            Primitive::Box {
                center,
                half_extents,
                orientation,
            } => {
                let inv = orientation.transpose();
                let o = inv.mul_vec(origin - center).to_array();
                let d = inv.mul_vec(dir).to_array();
                let (mut t_enter, mut t_exit) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let h = half_extents[k];
                    if d[k] == 0.0 {
                        if o[k].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((-h - o[k]) / d[k], (h - o[k]) / d[k]);
                    t_enter = t_enter.max(a.min(b));
                    t_exit = t_exit.min(a.max(b));
                }
                if t_enter > t_exit {
                    return None;
                }
                [t_enter, t_exit].into_iter().find(|&t| t > T_MIN)
            }
        }
    }

    /// Signed distance from `p` to the surface, negative inside.
    pub fn signed_distance(&self, p: Point3) -> f64 {
        match *self {
            Primitive::Sphere { center, radius } => (p - center).norm() - radius,
            Primitive::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let w = p - base;
                let s = w.dot(axis);
                let radial = (w - axis * s).norm();
                let dx = radial - radius;
                let dy = (s - height / 2.0).abs() - height / 2.0;
                dx.max(dy).min(0.0) + dx.max(0.0).hypot(dy.max(0.0))
            }
            Primitive::Box {
                center,
                half_extents,
                orientation,
            } => {
                let local = orientation.transpose().mul_vec(p - center).to_array();
                let q: [f64; 3] = std::array::from_fn(|k| local[k].abs() - half_extents[k]);
                let outside = Point3::new(q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)).norm();
                outside + q[0].max(q[1]).max(q[2]).min(0.0)
            }
        }
    }

    /// Lowest scene z reached by the primitive.
    pub fn min_z(&self) -> f64 {
        match *self {
            Primitive::Sphere { center, radius } => center.z - radius,
            Primitive::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let top = base + axis * height;
                let lateral = radius * (1.0 - axis.z * axis.z).max(0.0).sqrt();
                base.z.min(top.z) - lateral
            }
            Primitive::Box {
                center,
                half_extents,
                orientation,
            } => {
                let reach: f64 = (0..3)
                    .map(|k| (orientation.0[2][k] * half_extents[k]).abs())
                    .sum();
                center.z - reach
            }
        }
    }

    /// Point the camera aims at when this primitive is the target.
    pub fn aim_point(&self) -> Point3 {
        match *self {
            Primitive::Sphere { center, .. } | Primitive::Box { center, .. } => center,
            Primitive::Cylinder {
                base, axis, height, ..
            } => base + axis * (height / 2.0),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Primitive::Sphere { center, radius } => center.is_finite() && radius > 0.0,
            Primitive::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                base.is_finite() && (axis.norm() - 1.0).abs() < 1e-9 && radius > 0.0 && height > 0.0
            }
            Primitive::Box {
                center,
                half_extents,
                orientation,
            } => {
                center.is_finite()
                    && half_extents.iter().all(|&h| h > 0.0)
                    && orientation.is_rotation(1e-9)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("degenerate primitive {self:?}"))
        }
    }
}

/// Footprint of a primitive resting on a horizontal plane, used for
/// analytic non-intersection checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Rectangle with half sizes along its local axes, rotated by `yaw`.
    Rect {
        center: [f64; 2],
        half: [f64; 2],
        yaw: f64,
    },
}

impl Footprint {
    /// Footprint of an upright primitive. `None` for tilted cylinders or
    /// boxes that are not yaw-only rotations.
    pub fn of(p: &Primitive) -> Option<Footprint> {
        match *p {
            Primitive::Sphere { center, radius } => Some(Footprint::Circle {
                center: [center.x, center.y],
                radius,
            }),
            Primitive::Cylinder {
                base, axis, radius, ..
            } => ((axis.z - 1.0).abs() < 1e-12).then_some(Footprint::Circle {
                center: [base.x, base.y],
                radius,
            }),
            Primitive::Box {
                center,
                half_extents,
                orientation,
            } => {
                let m = &orientation.0;
                let upright = (m[2][2] - 1.0).abs() < 1e-12;
                upright.then(|| Footprint::Rect {
                    center: [center.x, center.y],
                    half: [half_extents[0], half_extents[1]],
                    yaw: m[1][0].atan2(m[0][0]),
                })
            }
        }
    }

    fn center(&self) -> [f64; 2] {
        match *self {
            Footprint::Circle { center, .. } | Footprint::Rect { center, .. } => center,
        }
    }

    fn rect_axes(yaw: f64) -> [[f64; 2]; 2] {
        let (s, c) = yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Half-length of the footprint's projection onto the unit axis `n`.
    fn projected_radius(&self, n: [f64; 2]) -> f64 {
        match *self {
            Footprint::Circle { radius, .. } => radius,
            Footprint::Rect { half, yaw, .. } => {
                let ax = Self::rect_axes(yaw);
                half[0] * (ax[0][0] * n[0] + ax[0][1] * n[1]).abs()
                    + half[1] * (ax[1][0] * n[0] + ax[1][1] * n[1]).abs()
            }
        }
    }

    /// True when the footprints are separated by more than `gap`.
    pub fn separated(&self, other: &Footprint, gap: f64) -> bool {
        match (*self, *other) {
            (
                Footprint::Circle {
                    center: a,
                    radius: ra,
                },
                Footprint::Circle {
                    center: b,
                    radius: rb,
                },
            ) => (a[0] - b[0]).hypot(a[1] - b[1]) > ra + rb + gap,
            (
                Footprint::Circle { center, radius },
                Footprint::Rect {
                    center: rc,
                    half,
                    yaw,
                },
            )
            | (
                Footprint::Rect {
                    center: rc,
                    half,
                    yaw,
                },
                Footprint::Circle { center, radius },
            ) => {
                // closest point of the rectangle to the circle center, in rect frame
                let ax = Self::rect_axes(yaw);
                let d = [center[0] - rc[0], center[1] - rc[1]];
                let local = [
                    ax[0][0] * d[0] + ax[0][1] * d[1],
                    ax[1][0] * d[0] + ax[1][1] * d[1],
                ];
                let clamped = [
                    local[0].clamp(-half[0], half[0]),
                    local[1].clamp(-half[1], half[1]),
                ];
                (local[0] - clamped[0]).hypot(local[1] - clamped[1]) > radius + gap
            }
            (Footprint::Rect { yaw: ya, .. }, Footprint::Rect { yaw: yb, .. }) => {
                // separating axis theorem over the four edge normals
                let (ca, cb) = (self.center(), other.center());
                let d = [cb[0] - ca[0], cb[1] - ca[1]];
                let axes = Self::rect_axes(ya).into_iter().chain(Self::rect_axes(yb));
                axes.into_iter().any(|n| {
                    let dist = (d[0] * n[0] + d[1] * n[1]).abs();
                    dist > self.projected_radius(n) + other.projected_radius(n) + gap
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    #[test]
    fn sphere_on_axis() {
        let s = Primitive::Sphere {
            center: Point3::new(0.0, 0.0, 400.0),
            radius: 30.0,
        };
        assert_eq!(s.intersect(Point3::ORIGIN, Z), Some(370.0));
        assert_eq!(s.intersect(Point3::new(100.0, 0.0, 0.0), Z), None);
    }

    #[test]
    fn cylinder_side_and_cap() {
        let c = Primitive::Cylinder {
            base: Point3::ORIGIN,
            axis: Z,
            radius: 10.0,
            height: 50.0,
        };
        // from above through the cap
        let t = c
            .intersect(Point3::new(0.0, 0.0, 100.0), Point3::new(0.0, 0.0, -1.0))
            .unwrap();
        assert!((t - 50.0).abs() < 1e-12);
        // horizontal ray hits the side
        let t = c
            .intersect(Point3::new(-100.0, 0.0, 20.0), Point3::new(1.0, 0.0, 0.0))
            .unwrap();
        assert!((t - 90.0).abs() < 1e-12);
        // horizontal ray above the top misses
        assert!(c
            .intersect(Point3::new(-100.0, 0.0, 60.0), Point3::new(1.0, 0.0, 0.0))
            .is_none());
    }

    #[test]
    fn box_with_yaw() {
        let b = Primitive::Box {
            center: Point3::new(0.0, 0.0, 20.0),
            half_extents: [30.0, 10.0, 20.0],
            orientation: Mat3::rotation_z(std::f64::consts::FRAC_PI_2),
        };
        // rotated 90°: long side now along y
        let t = b
            .intersect(Point3::new(0.0, -100.0, 20.0), Point3::new(0.0, 1.0, 0.0))
            .unwrap();
        assert!((t - 70.0).abs() < 1e-9);
        let t = b
            .intersect(Point3::new(-100.0, 0.0, 20.0), Point3::new(1.0, 0.0, 0.0))
            .unwrap();
        assert!((t - 90.0).abs() < 1e-9);
        assert!((b.min_z()).abs() < 1e-12);
    }

    #[test]
    fn hits_lie_on_surface() {
        let prims = [
            Primitive::Sphere {
                center: Point3::new(5.0, -3.0, 300.0),
                radius: 40.0,
            },
            Primitive::Cylinder {
                base: Point3::new(0.0, 0.0, 260.0),
                axis: Point3::new(0.0, 0.6, 0.8),
                radius: 25.0,
                height: 70.0,
            },
            Primitive::Box {
                center: Point3::new(-5.0, 4.0, 320.0),
                half_extents: [20.0, 35.0, 15.0],
                orientation: Mat3::rotation_z(0.4),
            },
        ];
        for p in prims {
            let mut hits = 0;
            for i in -20..=20 {
                for j in -20..=20 {
                    let dir = Point3::new(i as f64 * 0.01, j as f64 * 0.01, 1.0);
                    if let Some(t) = p.intersect(Point3::ORIGIN, dir) {
                        hits += 1;
                        assert!(p.signed_distance(dir * t).abs() < 1e-9, "{p:?}");
                    }
                }
            }
            assert!(hits > 50, "{p:?} only {hits} hits");
        }
    }

    #[test]
    fn footprint_tests() {
        let circle = |x: f64, y: f64, r: f64| Footprint::Circle {
            center: [x, y],
            radius: r,
        };
        let rect = |x: f64, y: f64, hx: f64, hy: f64, yaw: f64| Footprint::Rect {
            center: [x, y],
            half: [hx, hy],
            yaw,
        };
        assert!(circle(0.0, 0.0, 10.0).separated(&circle(25.0, 0.0, 10.0), 4.0));
        assert!(!circle(0.0, 0.0, 10.0).separated(&circle(25.0, 0.0, 10.0), 6.0));
        // circle near a rectangle corner
        assert!(rect(0.0, 0.0, 10.0, 10.0, 0.0).separated(&circle(20.0, 20.0, 14.0), 0.0));
        assert!(!rect(0.0, 0.0, 10.0, 10.0, 0.0).separated(&circle(20.0, 20.0, 14.2), 0.0));
        // rotated squares: diamond reaches further along x
        let diamond = rect(0.0, 0.0, 10.0, 10.0, std::f64::consts::FRAC_PI_4);
        assert!(!diamond.separated(&rect(22.0, 0.0, 10.0, 10.0, 0.0), 0.0));
        assert!(diamond.separated(&rect(25.0, 0.0, 10.0, 10.0, 0.0), 0.0));
    }
}
