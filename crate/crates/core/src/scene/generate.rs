//! Procedural scene suites: doors hinged on a cabinet edge and drawers
//! sliding out of a cabinet front.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{serialize_scene, ArticulatedScene, ChildPart, JointSpec, JointType, Part, PartGeometry};
use crate::geometry::Vec3;
use crate::seeds::{derive_seed, rng};

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub file_name: String,
    pub scene: ArticulatedScene,
    pub text: String,
}

const PANEL: f64 = 0.02;

struct Cabinet {
    center: Vec3,
    size: Vec3,
}

impl Cabinet {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let size = Vec3::new(
            rng.random_range(0.4..0.6),
            rng.random_range(0.4..0.8),
            rng.random_range(0.5..1.0),
        );
        let offset = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
        Cabinet {
            center: offset + Vec3::new(0.0, 0.0, size.z / 2.0),
            size,
        }
    }

    fn front(&self) -> f64 {
        self.center.x + self.size.x / 2.0
    }
}

fn door(index: usize, rng: &mut ChaCha8Rng, samples: usize) -> ArticulatedScene {
    let cab = Cabinet::random(rng);
    let front = cab.front();
    let c = cab.center;
    let (w, h) = (cab.size.y, cab.size.z);
    let panel = PartGeometry::new(
        Vec3::new(front + PANEL / 2.0, c.y, c.z),
        Vec3::new(PANEL, w, h),
        samples,
    )
    .expect("positive panel size");
    // Axis sign chosen so that +q swings the panel away from the cabinet.
    let (axis, origin) = match rng.random_range(0..3) {
        0 => (Vec3::new(0.0, 0.0, -1.0), Vec3::new(front, c.y - w / 2.0, c.z)),
        1 => (Vec3::new(0.0, 0.0, 1.0), Vec3::new(front, c.y + w / 2.0, c.z)),
        _ => (Vec3::new(0.0, 1.0, 0.0), Vec3::new(front, c.y, c.z - h / 2.0)),
    };
    let upper = rng.random_range(FRAC_PI_2..=PI);
    let joint =
        JointSpec::new("hinge", JointType::Revolute, axis, origin, 0.0, upper).expect("generated joint is valid");
    ArticulatedScene {
        name: format!("door_{index:03}"),
        base_parts: vec![Part {
            id: "cabinet".into(),
            geometry: PartGeometry::new(c, cab.size, samples).expect("positive cabinet size"),
        }],
        child_parts: vec![ChildPart {
            id: "door".into(),
            parent: "cabinet".into(),
            geometry: panel,
            joint,
        }],
        target_part: "door".into(),
    }
}

fn drawer(index: usize, rng: &mut ChaCha8Rng, samples: usize) -> ArticulatedScene {
    let cab = Cabinet::random(rng);
    let c = cab.center;
    let depth = 0.8 * cab.size.x;
    let width = 0.8 * cab.size.y;
    let height = rng.random_range(0.12..0.25);
    let z_room = (cab.size.z - height) / 2.0 * 0.8;
    let center = Vec3::new(
        cab.front() - depth / 2.0 + PANEL,
        c.y,
        c.z + rng.random_range(-z_room..=z_room),
    );
    let geometry = PartGeometry::new(center, Vec3::new(depth, width, height), samples).expect("positive drawer");
    let upper = rng.random_range(0.2..=0.5);
    let joint =
        JointSpec::new("slide", JointType::Prismatic, Vec3::x(), center, 0.0, upper).expect("generated joint is valid");
    ArticulatedScene {
        name: format!("drawer_{index:03}"),
        base_parts: vec![Part {
            id: "cabinet".into(),
            geometry: PartGeometry::new(c, cab.size, samples).expect("positive cabinet size"),
        }],
        child_parts: vec![ChildPart {
            id: "drawer".into(),
            parent: "cabinet".into(),
            geometry,
            joint,
        }],
        target_part: "drawer".into(),
    }
}

/// Scene `index` of the suite seeded by `seed`: even indices are doors,
/// odd indices drawers.
pub fn generate_scene(index: usize, seed: u64, samples: usize) -> GeneratedScene {
    let mut rng = rng(derive_seed(seed, "scene", index as u64));
    let scene = if index.is_multiple_of(2) {
        door(index, &mut rng, samples)
    } else {
        drawer(index, &mut rng, samples)
    };
    let kind = scene.target_joint().joint_type.as_str();
    GeneratedScene {
        file_name: format!("scene_{index:03}_{kind}.urdf"),
        text: serialize_scene(&scene),
        scene,
    }
}

pub fn make_scenes(count: usize, seed: u64, samples: usize) -> Vec<GeneratedScene> {
    (0..count).map(|i| generate_scene(i, seed, samples)).collect()
}
