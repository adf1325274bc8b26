//! Trajectory synthesis from an axis estimate: rotation matrices via the
//! Rodrigues formula, circular (revolute) and straight (prismatic) waypoint
//! plans, and the end-effector orientation chain that keeps a rigidly
//! attached gripper fixed relative to the part.

use std::io::Write;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::estimation::AxisEstimate;
use crate::geometry::{point_to_line_distance, Vec3};
use crate::scene::JointType;

pub const DEFAULT_STEPS: usize = 20;
const ON_AXIS_TOLERANCE: f64 = 1e-9;

/// A proper rotation (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Wraps `m` if it is a rotation within `tol`.
    pub fn try_from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let r = RotationMatrix(m);
        if r.orthonormality_error() > tol || (m.determinant() - 1.0).abs() > tol {
            return Err(Error::InvalidParameter("matrix is not in SO(3)".into()));
        }
        Ok(r)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    /// Largest entry of `R Rᵀ - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0 * self.0.transpose() - Matrix3::identity()).amax()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Unit quaternion `[w, x, y, z]` with `w >= 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0));
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

fn skew(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// `R(φ) = I + sin φ [ω]× + (1 − cos φ)[ω]×²`. The axis is renormalized;
/// a zero axis is an error.
pub fn rodrigues(axis: &Vec3, angle: f64) -> Result<RotationMatrix> {
    let n = axis.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::DegenerateGeometry("rotation axis has zero length".into()));
    }
    let k = skew(&(axis / n));
    Ok(RotationMatrix(
        Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos()),
    ))
}

/// Interpolation count and goal magnitudes for a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    pub steps: usize,
    pub goal_angle: f64,
    pub goal_distance: f64,
}

impl TrajectoryParams {
    pub fn new(steps: usize, goal_angle: f64, goal_distance: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        if !goal_angle.is_finite() || !goal_distance.is_finite() {
            return Err(Error::InvalidParameter("goal magnitudes must be finite".into()));
        }
        Ok(TrajectoryParams {
            steps,
            goal_angle,
            goal_distance,
        })
    }

    fn check(&self, kind: JointType) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        match kind {
            JointType::Revolute if self.goal_angle == 0.0 => {
                Err(Error::InvalidParameter("goal angle must be nonzero".into()))
            }
            JointType::Prismatic if self.goal_distance == 0.0 => {
                Err(Error::InvalidParameter("goal distance must be nonzero".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `K + 1` waypoints, the first being the contact point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub kind: JointType,
    pub waypoints: Vec<Vec3>,
    pub orientations: Option<Vec<RotationMatrix>>,
}

impl TrajectoryPlan {
    pub fn steps(&self) -> usize {
        self.waypoints.len() - 1
    }
}

/// Rotates `p` about the line (`axis`, `origin`) by `i/K · φ_g` for every
/// `i` in `0..=K`. Each waypoint is computed directly, not accumulated.
pub fn plan_revolute(p: &Vec3, axis: &Vec3, origin: &Vec3, params: &TrajectoryParams) -> Result<TrajectoryPlan> {
    params.check(JointType::Revolute)?;
    let n = axis.norm();
    if !(n > 1e-12) {
        return Err(Error::DegenerateGeometry("rotation axis has zero length".into()));
    }
    let unit = axis / n;
    if point_to_line_distance(p, origin, &unit) <= ON_AXIS_TOLERANCE {
        return Err(Error::DegenerateGeometry(
            "contact point lies on the estimated axis".into(),
        ));
    }
    let k = params.steps as f64;
    let rel = p - origin;
    let mut waypoints = Vec::with_capacity(params.steps + 1);
    waypoints.push(*p);
    for i in 1..=params.steps {
        let r = rodrigues(&unit, i as f64 / k * params.goal_angle)?;
        waypoints.push(r.apply(&rel) + origin);
    }
    Ok(TrajectoryPlan {
        kind: JointType::Revolute,
        waypoints,
        orientations: None,
    })
}

/// Straight line from `p` to `p + l_g · f/‖f‖` in `K` equal steps.
pub fn plan_prismatic(p: &Vec3, flow: &Vec3, params: &TrajectoryParams) -> Result<TrajectoryPlan> {
    params.check(JointType::Prismatic)?;
    let n = flow.norm();
    if !(n > 1e-9) {
        return Err(Error::DegenerateGeometry("flow at contact is zero".into()));
    }
    let dir = flow / n;
    let k = params.steps as f64;
    let waypoints = (0..=params.steps)
        .map(|i| p + dir * (i as f64 / k * params.goal_distance))
        .collect();
    Ok(TrajectoryPlan {
        kind: JointType::Prismatic,
        waypoints,
        orientations: None,
    })
}

/// `q_i = R(φ_g/K) q_{i-1}`, world-frame increments applied on the left.
pub fn ee_orientation_chain(
    q0: &RotationMatrix,
    axis: &Vec3,
    params: &TrajectoryParams,
) -> Result<Vec<RotationMatrix>> {
    if params.steps == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let step = rodrigues(axis, params.goal_angle / params.steps as f64)?;
    let mut chain = Vec::with_capacity(params.steps + 1);
    chain.push(*q0);
    for i in 1..=params.steps {
        let next = step * chain[i - 1];
        chain.push(next);
    }
    Ok(chain)
}

/// Positions plus gripper orientations. Revolute plans rotate the gripper
/// with the part; prismatic plans keep `q0` throughout.
pub fn plan_full_pose(
    p: &Vec3,
    q0: &RotationMatrix,
    estimate: &AxisEstimate,
    params: &TrajectoryParams,
) -> Result<TrajectoryPlan> {
    match estimate.articulation_type {
        JointType::Revolute => {
            let mut plan = plan_revolute(p, &estimate.direction, &estimate.origin, params)?;
            plan.orientations = Some(ee_orientation_chain(q0, &estimate.direction, params)?);
            Ok(plan)
        }
        JointType::Prismatic => {
            let mut plan = plan_prismatic(p, &estimate.direction, params)?;
            plan.orientations = Some(vec![*q0; params.steps + 1]);
            Ok(plan)
        }
    }
}

pub const TRAJECTORY_CSV_HEADER: &str = "step,x,y,z,qw,qx,qy,qz";

/// Writes `step,x,y,z,qw,qx,qy,qz`; rows without orientation get the
/// identity quaternion.
pub fn write_trajectory_csv<W: Write>(mut out: W, plan: &TrajectoryPlan) -> Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for (i, w) in plan.waypoints.iter().enumerate() {
        let q = plan
            .orientations
            .as_ref()
            .map(|o| o[i].to_quaternion())
            .unwrap_or([1.0, 0.0, 0.0, 0.0]);
        writeln!(
            out,
            "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            w.x, w.y, w.z, q[0], q[1], q[2], q[3]
        )?;
    }
    Ok(())
}
