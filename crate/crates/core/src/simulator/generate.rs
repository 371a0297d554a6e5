use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Footprint, GripType, PlaneSpec, Primitive, SceneObject, SceneSpec, FIRST_OBJECT_ID};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Point3};

const MAX_ATTEMPTS: usize = 1000;
/// Minimum footprint clearance between objects in mm.
const MIN_GAP: f64 = 40.0;
const DEFAULT_NOISE_SIGMA: f64 = 2.0;

/// Shape and size of an object before placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectShape {
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
    Box { half_extents: [f64; 3], yaw: f64 },
}

impl ObjectShape {
    /// Radius of a vertical cylinder enclosing the shape.
    fn bounding_radius(&self) -> f64 {
        match *self {
            ObjectShape::Sphere { radius } | ObjectShape::Cylinder { radius, .. } => radius,
            ObjectShape::Box { half_extents, .. } => half_extents[0].hypot(half_extents[1]),
        }
    }

    /// The shape resting on the plane at height `z` with footprint center `(x, y)`.
    fn place(&self, x: f64, y: f64, z: f64) -> Primitive {
        match *self {
            ObjectShape::Sphere { radius } => Primitive::Sphere {
                center: Point3::new(x, y, z + radius),
                radius,
            },
            ObjectShape::Cylinder { radius, height } => Primitive::Cylinder {
                base: Point3::new(x, y, z),
                axis: Point3::new(0.0, 0.0, 1.0),
                radius,
                height,
            },
            ObjectShape::Box { half_extents, yaw } => Primitive::Box {
                center: Point3::new(x, y, z + half_extents[2]),
                half_extents,
                orientation: Mat3::rotation_z(yaw),
            },
        }
    }

    fn random(rng: &mut ChaCha8Rng) -> Self {
        match rng.random_range(0..3) {
            0 => ObjectShape::Sphere {
                radius: rng.random_range(15.0..60.0),
            },
            1 => ObjectShape::Cylinder {
                radius: rng.random_range(15.0..50.0),
                height: rng.random_range(30.0..120.0),
            },
            _ => ObjectShape::Box {
                half_extents: std::array::from_fn(|_| rng.random_range(15.0..60.0)),
                yaw: rng.random_range(0.0..std::f64::consts::PI),
            },
        }
    }

    fn for_grip(grip: GripType, rng: &mut ChaCha8Rng) -> Self {
        match grip {
            GripType::Pinch => ObjectShape::Box {
                half_extents: [
                    rng.random_range(15.0..25.0),
                    rng.random_range(15.0..25.0),
                    rng.random_range(15.0..30.0),
                ],
                yaw: rng.random_range(0.0..std::f64::consts::PI),
            },
            GripType::Spherical => ObjectShape::Sphere {
                radius: rng.random_range(30.0..60.0),
            },
            GripType::Cylindrical => ObjectShape::Cylinder {
                radius: rng.random_range(20.0..45.0),
                height: rng.random_range(80.0..120.0),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneTemplate {
    /// One object at the table origin; random shape when `None`.
    SingleObject(Option<ObjectShape>),
    /// `k` random objects; the first is the target.
    Cluttered(usize),
    /// One pinch-scale, one spherical and one cylindrical object, in that order.
    GripTaxonomy,
}

impl std::str::FromStr for SceneTemplate {
    type Err = Error;

    /// Parses `single_object`, `grip_taxonomy` or `cluttered:K`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_object" => Ok(SceneTemplate::SingleObject(None)),
            "grip_taxonomy" => Ok(SceneTemplate::GripTaxonomy),
            _ => s
                .strip_prefix("cluttered:")
                .and_then(|k| k.parse().ok())
                .map(SceneTemplate::Cluttered)
                .ok_or_else(|| {
                    Error::param(
                        "template",
                        format!("expected single_object, grip_taxonomy or cluttered:K, got `{s}`"),
                    )
                }),
        }
    }
}

/// Builds a scene whose first object sits at the table origin and whose other
/// objects lie beside or behind it as seen from an approach along +y, so the
/// target is the object closest to an approaching camera.
pub fn generate_scene(seed: u64, template: &SceneTemplate) -> Result<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = PlaneSpec::default();
    let shapes: Vec<(ObjectShape, Option<GripType>)> = match *template {
        SceneTemplate::SingleObject(shape) => {
            vec![(shape.unwrap_or_else(|| ObjectShape::random(&mut rng)), None)]
        }
        SceneTemplate::Cluttered(k) => {
            if k == 0 {
                return Err(Error::param("template", "cluttered scenes need k >= 1"));
            }
            if k > (u8::MAX - FIRST_OBJECT_ID) as usize + 1 {
                return Err(Error::param(
                    "template",
                    format!("at most 254 objects, got {k}"),
                ));
            }
            (0..k)
                .map(|_| (ObjectShape::random(&mut rng), None))
                .collect()
        }
        SceneTemplate::GripTaxonomy => {
            [GripType::Pinch, GripType::Spherical, GripType::Cylindrical]
                .into_iter()
                .map(|g| (ObjectShape::for_grip(g, &mut rng), Some(g)))
                .collect()
        }
    };

    let z = plane.height();
    let mut placed: Vec<(ObjectShape, f64, f64)> = Vec::new();
    for (i, (shape, _)) in shapes.iter().enumerate() {
        if i == 0 {
            placed.push((*shape, 0.0, 0.0));
            continue;
        }
        let r_new = shape.bounding_radius();
        let mut ok = false;
        for _ in 0..MAX_ATTEMPTS {
            let min_dist = shapes[0].0.bounding_radius() + r_new + MIN_GAP;
            let dist = rng.random_range(min_dist..min_dist + 250.0);
            let angle = rng.random_range(30f64.to_radians()..150f64.to_radians());
            let (x, y) = (dist * angle.cos(), dist * angle.sin());
            let clear = placed
                .iter()
                .all(|(s, px, py)| (x - px).hypot(y - py) > s.bounding_radius() + r_new + MIN_GAP);
            if clear {
                placed.push((*shape, x, y));
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Placement {
                attempts: MAX_ATTEMPTS,
            });
        }
    }

    let objects = placed
        .iter()
        .zip(&shapes)
        .enumerate()
        .map(|(i, ((shape, x, y), (_, grip)))| SceneObject {
            id: FIRST_OBJECT_ID + i as u8,
            primitive: shape.place(*x, *y, z),
            grip: *grip,
        })
        .collect();
    let scene = SceneSpec {
        plane,
        objects,
        noise_sigma: DEFAULT_NOISE_SIGMA,
        dropout_rate: 0.0,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}

/// Exact pairwise non-intersection of upright objects resting on the table.
pub fn pairwise_separated(scene: &SceneSpec) -> bool {
    let prints: Vec<Option<Footprint>> = scene
        .objects
        .iter()
        .map(|o| Footprint::of(&o.primitive))
        .collect();
    prints.iter().enumerate().all(|(i, a)| {
        prints[i + 1..].iter().all(|b| match (a, b) {
            (Some(a), Some(b)) => a.separated(b, 0.0),
            _ => false,
        })
    })
}
