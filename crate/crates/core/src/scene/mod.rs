//! Kinematic scene model: box parts, single-DOF joints, surface sampling,
//! posing by joint value and occluded observation rendering.

mod generate;
mod urdf;

pub use generate::{generate_scene, make_scenes, GeneratedScene};
pub use urdf::{parse_scene, parse_scene_lenient, serialize_scene};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_point_on_line, Vec3};
use crate::seeds::{derive_seed, rng};
use crate::trajectory::rodrigues;

pub const DEFAULT_SAMPLE_COUNT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
}

impl JointType {
    pub fn as_str(self) -> &'static str {
        match self {
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
        }
    }
}

impl std::str::FromStr for JointType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "revolute" => Ok(JointType::Revolute),
            "prismatic" => Ok(JointType::Prismatic),
            other => Err(Error::InvalidParameter(format!("unknown articulation type `{other}`"))),
        }
    }
}

/// A single joint. `q == lower` is the closed state and increasing `q` opens
/// the part; the axis sign encodes which way is "open".
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub joint_type: JointType,
    pub axis: Vec3,
    pub origin: Vec3,
    pub lower: f64,
    pub upper: f64,
}

impl JointSpec {
    pub fn new(
        name: impl Into<String>,
        joint_type: JointType,
        axis: Vec3,
        origin: Vec3,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        let name = name.into();
        let norm = axis.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::parse(
                format!("joint name=\"{name}\""),
                "axis vector has zero length",
            ));
        }
        // Leave already-unit axes untouched so that serialize/parse is exact.
        let axis = if (norm - 1.0).abs() > 1e-12 { axis / norm } else { axis };
        if !(lower < upper) {
            return Err(Error::parse(
                format!("joint name=\"{name}\""),
                format!("limit lower ({lower}) must be below upper ({upper})"),
            ));
        }
        Ok(JointSpec {
            name,
            joint_type,
            axis,
            origin,
            lower,
            upper,
        })
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn check_limits(&self, q: f64) -> Result<()> {
        if q.is_nan() || q < self.lower || q > self.upper {
            return Err(Error::OutOfLimits {
                value: q,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }

    pub fn opening_fraction(&self, q: f64) -> f64 {
        (q - self.lower) / self.range()
    }

    /// Maps a closed-state point to its position at joint value `q`.
    /// Limits are not checked here.
    pub fn transform_point(&self, closed: &Vec3, q: f64) -> Vec3 {
        let displacement = q - self.lower;
        if displacement == 0.0 {
            return *closed;
        }
        match self.joint_type {
            JointType::Prismatic => closed + self.axis * displacement,
            JointType::Revolute => {
                // axis is unit by construction
                let rot = rodrigues(&self.axis, displacement).expect("joint axis is unit");
                rot.matrix() * (closed - self.origin) + self.origin
            }
        }
    }

    pub fn distance_to_axis(&self, p: &Vec3) -> f64 {
        (p - nearest_point_on_line(p, &self.origin, &self.axis)).norm()
    }
}

/// Axis-aligned box in world coordinates at the closed state.
#[derive(Debug, Clone, PartialEq)]
pub struct PartGeometry {
    pub center: Vec3,
    pub size: Vec3,
    pub sample_count: usize,
}

impl PartGeometry {
    pub fn new(center: Vec3, size: Vec3, sample_count: usize) -> Result<Self> {
        if !size.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "box size must be positive, got {:?}",
                size.as_slice()
            )));
        }
        if sample_count == 0 {
            return Err(Error::InvalidParameter("sample_count must be >= 1".into()));
        }
        Ok(PartGeometry {
            center,
            size,
            sample_count,
        })
    }

    fn face_areas(&self) -> [f64; 6] {
        let (x, y, z) = (self.size.x, self.size.y, self.size.z);
        [y * z, y * z, x * z, x * z, x * y, x * y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub id: String,
    pub geometry: PartGeometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildPart {
    pub id: String,
    pub parent: String,
    pub geometry: PartGeometry,
    pub joint: JointSpec,
}

/// Static base parts plus independently jointed children (chain depth 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedScene {
    pub name: String,
    pub base_parts: Vec<Part>,
    pub child_parts: Vec<ChildPart>,
    pub target_part: String,
}

impl ArticulatedScene {
    pub fn target(&self) -> &ChildPart {
        self.child_parts
            .iter()
            .find(|c| c.id == self.target_part)
            .expect("target part validated at construction")
    }

    pub fn target_joint(&self) -> &JointSpec {
        &self.target().joint
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.child_parts.iter().any(|c| c.id == self.target_part) {
            return Err(Error::parse(
                "target",
                format!("target link `{}` is not a jointed child", self.target_part),
            ));
        }
        Ok(())
    }
}

/// Samples `geom.sample_count` points uniformly over the box surface: a face
/// is chosen with probability proportional to its area, then a point
/// uniformly within it.
pub fn sample_part_points(geom: &PartGeometry, seed: u64) -> Vec<Vec3> {
    let mut rng = rng(seed);
    let faces = WeightedIndex::new(geom.face_areas()).expect("positive face areas");
    let half = geom.size / 2.0;
    (0..geom.sample_count)
        .map(|_| {
            let face = faces.sample(&mut rng);
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let mut local = Vec3::zeros();
            for k in 0..3 {
                local[k] = if k == axis {
                    sign * half[k]
                } else {
                    rng.random_range(-half[k]..=half[k])
                };
            }
            geom.center + local
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartRole {
    Base,
    /// Index into `ArticulatedScene::child_parts`.
    Child(usize),
}

#[derive(Debug, Clone)]
pub struct SampledPart {
    pub id: String,
    pub role: PartRole,
    pub points: Vec<Vec3>,
}

/// A scene together with its closed-state surface samples. Part order is
/// base parts first, then children, each in declaration order.
#[derive(Debug, Clone)]
pub struct SampledScene {
    pub scene: ArticulatedScene,
    pub parts: Vec<SampledPart>,
    target: usize,
}

impl SampledScene {
    pub fn new(scene: ArticulatedScene, seed: u64) -> Self {
        let mut parts = Vec::with_capacity(scene.base_parts.len() + scene.child_parts.len());
        for p in &scene.base_parts {
            let idx = parts.len() as u64;
            parts.push(SampledPart {
                id: p.id.clone(),
                role: PartRole::Base,
                points: sample_part_points(&p.geometry, derive_seed(seed, "part", idx)),
            });
        }
        for (ci, c) in scene.child_parts.iter().enumerate() {
            let idx = parts.len() as u64;
            parts.push(SampledPart {
                id: c.id.clone(),
                role: PartRole::Child(ci),
                points: sample_part_points(&c.geometry, derive_seed(seed, "part", idx)),
            });
        }
        let target = parts
            .iter()
            .position(|p| p.id == scene.target_part && p.role != PartRole::Base)
            .expect("validated scene has a target child");
        SampledScene { scene, parts, target }
    }

    /// Index of the target part in `parts`.
    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn joint(&self) -> &JointSpec {
        self.scene.target_joint()
    }

    /// World position of target sample `index` at joint value `q`.
    pub fn target_point(&self, index: usize, q: f64) -> Vec3 {
        self.joint().transform_point(&self.parts[self.target].points[index], q)
    }

    pub fn total_points(&self) -> usize {
        self.parts.iter().map(|p| p.points.len()).sum()
    }
}

/// Every sampled point posed at a configuration, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedCloud {
    pub points: Vec<Vec3>,
    pub part: Vec<usize>,
    pub index: Vec<usize>,
}

/// Poses all points for target joint value `q`. Base parts and non-target
/// children stay at their closed state.
pub fn pose_points(scene: &SampledScene, q: f64) -> Result<PosedCloud> {
    let joint = scene.joint();
    joint.check_limits(q)?;
    let n = scene.total_points();
    let mut cloud = PosedCloud {
        points: Vec::with_capacity(n),
        part: Vec::with_capacity(n),
        index: Vec::with_capacity(n),
    };
    for (pi, part) in scene.parts.iter().enumerate() {
        let moving = pi == scene.target_index();
        for (i, p) in part.points.iter().enumerate() {
            cloud.points.push(if moving { joint.transform_point(p, q) } else { *p });
            cloud.part.push(pi);
            cloud.index.push(i);
        }
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionModel {
    pub base_dropout: f64,
    pub opening_coupled_dropout: f64,
    pub seed: u64,
}

impl OcclusionModel {
    pub fn new(base_dropout: f64, opening_coupled_dropout: f64, seed: u64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&base_dropout)
            && (0.0..=1.0).contains(&opening_coupled_dropout)
            && base_dropout + opening_coupled_dropout <= 1.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "occlusion dropouts must lie in [0,1] and sum to at most 1 \
                 (got {base_dropout} + {opening_coupled_dropout})"
            )));
        }
        Ok(OcclusionModel {
            base_dropout,
            opening_coupled_dropout,
            seed,
        })
    }

    pub fn none() -> Self {
        OcclusionModel {
            base_dropout: 0.0,
            opening_coupled_dropout: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        OcclusionModel { seed, ..self }
    }

    pub fn dropout_at(&self, opening_fraction: f64) -> f64 {
        (self.base_dropout + self.opening_coupled_dropout * opening_fraction).clamp(0.0, 1.0)
    }
}

/// A rendered point cloud. `mask` marks surviving target-part points;
/// `source_part`/`source_index` locate each point in the sampled scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub points: Vec<Vec3>,
    pub mask: Vec<bool>,
    pub source_part: Vec<usize>,
    pub source_index: Vec<usize>,
    pub config_q: f64,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter_map(|(i, m)| m.then_some(i))
    }

    /// Observation built from bare points and a mask, without provenance.
    pub fn from_points(points: Vec<Vec3>, mask: Vec<bool>, config_q: f64) -> Result<Self> {
        if points.len() != mask.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                actual: mask.len(),
            });
        }
        let n = points.len();
        Ok(Observation {
            points,
            mask,
            source_part: vec![0; n],
            source_index: (0..n).collect(),
            config_q,
        })
    }
}

/// Poses the scene at `q` and drops each target point independently with
/// probability `base + coupled * opening_fraction(q)`. Non-target points are
/// always kept. The result may have an empty mask.
pub fn render_observation(scene: &SampledScene, q: f64, occ: &OcclusionModel) -> Result<Observation> {
    let cloud = pose_points(scene, q)?;
    let dropout = occ.dropout_at(scene.joint().opening_fraction(q));
    let target = scene.target_index();
    let mut rng = rng(occ.seed);
    let n = cloud.points.len();
    let mut obs = Observation {
        points: Vec::with_capacity(n),
        mask: Vec::with_capacity(n),
        source_part: Vec::with_capacity(n),
        source_index: Vec::with_capacity(n),
        config_q: q,
    };
    for i in 0..n {
        let is_target = cloud.part[i] == target;
        if is_target && dropout > 0.0 && rng.random::<f64>() < dropout {
            continue;
        }
        obs.points.push(cloud.points[i]);
        obs.mask.push(is_target);
        obs.source_part.push(cloud.part[i]);
        obs.source_index.push(cloud.index[i]);
    }
    Ok(obs)
}
