//! Axis inference from dense fields.
//!
//! Each point with flow `f` and projection `r` votes for an axis direction
//! `normalize(r × f)` and an axis point `p + r`. Votes are sign-aligned to the
//! opening direction, then averaged over the segmentation mask. Optionally
//! `r` is first made orthogonal to `f` (Gram-Schmidt), which removes any
//! component of the projection that leaks along the flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::DenseFields;
use crate::geometry::Vec3;
use crate::scene::{ArticulatedScene, JointType, Observation};

/// `‖r̃ × f‖` at or below this marks a point as degenerate.
pub const DEGENERATE_CROSS: f64 = 1e-9;
const MIN_FLOW: f64 = 1e-9;
const PRISMATIC_AGREEMENT: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisEstimate {
    pub articulation_type: JointType,
    pub direction: Vec3,
    pub origin: Vec3,
    pub support_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrected {
    pub projection: Vec3,
    /// False when the flow was too small to correct against.
    pub applied: bool,
}

/// `r − proj_f r`. Skipped (returned unchanged, `applied == false`) when
/// `‖f‖ ≤ 1e-9`.
pub fn gram_schmidt_correct(flow: &Vec3, projection: &Vec3) -> Corrected {
    let ff = flow.norm_squared();
    if flow.norm() <= MIN_FLOW {
        return Corrected {
            projection: *projection,
            applied: false,
        };
    }
    let along = projection.dot(flow);
    let projection = if along == 0.0 {
        *projection
    } else {
        projection - flow * (along / ff)
    };
    Corrected {
        projection,
        applied: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointAxis {
    pub direction: Vec3,
    pub origin: Vec3,
}

/// Single-point axis vote. `None` when `‖r̃ × f‖ ≤ 1e-9` (point on the axis,
/// zero flow, or flow parallel to projection).
pub fn estimate_axis_pointwise(p: &Vec3, flow: &Vec3, projection: &Vec3, use_gs: bool) -> Option<PointAxis> {
    let r = if use_gs {
        gram_schmidt_correct(flow, projection).projection
    } else {
        *projection
    };
    let cross = r.cross(flow);
    let n = cross.norm();
    if !(n > DEGENERATE_CROSS) {
        return None;
    }
    let mut direction = cross / n;
    let origin = p + r;
    // positive rotation about the vote must move p along f
    if direction.cross(&(p - origin)).dot(flow) < 0.0 {
        direction = -direction;
    }
    Some(PointAxis { direction, origin })
}

fn candidates(fields: &DenseFields, use_mask: bool) -> impl Iterator<Item = usize> + '_ {
    (0..fields.len()).filter(move |&i| !use_mask || fields.mask[i])
}

/// Aggregates per-point votes into one axis. Revolute votes are aligned to
/// the lowest-index usable vote before averaging; prismatic direction is the
/// normalized mean flow and the origin is the centroid of supporting points.
pub fn aggregate_axis(
    obs: &Observation,
    fields: &DenseFields,
    articulation_type: JointType,
    use_gs: bool,
    use_mask: bool,
) -> Result<AxisEstimate> {
    if obs.len() != fields.len() {
        return Err(Error::LengthMismatch {
            expected: obs.len(),
            actual: fields.len(),
        });
    }
    match articulation_type {
        JointType::Revolute => {
            let mut reference: Option<Vec3> = None;
            let mut dir_sum = Vec3::zeros();
            let mut origin_sum = Vec3::zeros();
            let mut support = 0usize;
            let mut excluded = 0usize;
            for i in candidates(fields, use_mask) {
                let Some(vote) =
                    estimate_axis_pointwise(&obs.points[i], &fields.flow[i], &fields.projection[i], use_gs)
                else {
                    excluded += 1;
                    continue;
                };
                let reference = *reference.get_or_insert(vote.direction);
                dir_sum += if vote.direction.dot(&reference) < 0.0 {
                    -vote.direction
                } else {
                    vote.direction
                };
                origin_sum += vote.origin;
                support += 1;
            }
            log::debug!("aggregate_axis: {support} supporting points, {excluded} degenerate");
            let norm = dir_sum.norm();
            if support == 0 || !(norm > 0.0) {
                return Err(Error::Estimation(
                    "no non-degenerate point to estimate a revolute axis from".into(),
                ));
            }
            Ok(AxisEstimate {
                articulation_type,
                direction: dir_sum / norm,
                origin: origin_sum / support as f64,
                support_count: support,
            })
        }
        JointType::Prismatic => {
            let mut flow_sum = Vec3::zeros();
            let mut centroid = Vec3::zeros();
            let mut support = 0usize;
            for i in candidates(fields, use_mask) {
                if fields.flow[i].norm() <= MIN_FLOW {
                    continue;
                }
                flow_sum += fields.flow[i];
                centroid += obs.points[i];
                support += 1;
            }
            let norm = flow_sum.norm();
            if support == 0 || !(norm > MIN_FLOW) {
                return Err(Error::Estimation(
                    "no nonzero flow to estimate a prismatic axis from".into(),
                ));
            }
            Ok(AxisEstimate {
                articulation_type,
                direction: flow_sum / norm,
                origin: centroid / support as f64,
                support_count: support,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierMode {
    #[default]
    Oracle,
    Heuristic,
}

impl std::str::FromStr for ClassifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(ClassifierMode::Oracle),
            "heuristic" => Ok(ClassifierMode::Heuristic),
            other => Err(Error::InvalidParameter(format!("unknown classifier mode `{other}`"))),
        }
    }
}

/// Mean dot product `f_i · f_j` over all ordered pairs of distinct nonzero
/// masked flows, via `(‖Σf‖² − Σ‖f‖²) / (n(n − 1))`. With unit flows this is
/// the mean pairwise cosine; radius-scaled revolute flows pull it well below
/// one even when their directions agree. Returns 1 with fewer than two
/// usable flows.
pub fn mean_pairwise_flow_agreement(fields: &DenseFields) -> f64 {
    let mut sum = Vec3::zeros();
    let mut sq = 0.0;
    let mut n = 0usize;
    for i in 0..fields.len() {
        let f = fields.flow[i];
        if fields.mask[i] && f.norm() > MIN_FLOW {
            sum += f;
            sq += f.norm_squared();
            n += 1;
        }
    }
    if n < 2 {
        return 1.0;
    }
    let n = n as f64;
    (sum.norm_squared() - sq) / (n * (n - 1.0))
}

/// Oracle mode reads the scene's joint type; heuristic mode calls a flow
/// field prismatic when its masked flows are nearly identical.
pub fn classify_articulation(scene: &ArticulatedScene, fields: &DenseFields, mode: ClassifierMode) -> JointType {
    match mode {
        ClassifierMode::Oracle => scene.target_joint().joint_type,
        ClassifierMode::Heuristic => heuristic_articulation_type(fields),
    }
}

/// Prismatic when the masked flows are nearly identical, else revolute.
pub fn heuristic_articulation_type(fields: &DenseFields) -> JointType {
    if mean_pairwise_flow_agreement(fields) > PRISMATIC_AGREEMENT {
        JointType::Prismatic
    } else {
        JointType::Revolute
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AxisJson {
    #[serde(rename = "type")]
    kind: JointType,
    omega: [f64; 3],
    origin: [f64; 3],
    support: usize,
}

impl AxisEstimate {
    pub fn to_json(&self) -> String {
        let doc = AxisJson {
            kind: self.articulation_type,
            omega: [self.direction.x, self.direction.y, self.direction.z],
            origin: [self.origin.x, self.origin.y, self.origin.z],
            support: self.support_count,
        };
        serde_json::to_string(&doc).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AxisJson = serde_json::from_str(text)?;
        let direction = Vec3::from(doc.omega);
        let n = direction.norm();
        if !(n > 0.0) || (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "omega must be a unit vector (norm {n})"
            )));
        }
        if doc.support == 0 {
            return Err(Error::InvalidParameter("support must be >= 1".into()));
        }
        Ok(AxisEstimate {
            articulation_type: doc.kind,
            direction,
            origin: Vec3::from(doc.origin),
            support_count: doc.support,
        })
    }
}
