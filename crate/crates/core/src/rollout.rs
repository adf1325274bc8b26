//! Closed-loop manipulation in a kinematic world.
//!
//! The gripper is attached by suction to one target-part sample. Each step
//! moves the joint by whatever displacement the commanded target point
//! induces along the joint's one-dimensional manifold; the rest of the
//! command is absorbed by the constraint. Three policies are provided:
//!
//! * `flowbotpp`: estimate the axis, plan `K` waypoints, execute the first
//!   `H`, re-observe and replan.
//! * `af_only`: replan every step and move a fixed distance along the
//!   predicted flow at the contact.
//! * `no_mpc`: execute the whole first plan open loop.

use std::io::Write;

use crate::error::{Error, Result};
use crate::estimation::{aggregate_axis, classify_articulation, ClassifierMode};
use crate::geometry::{nearest_point_on_line, Vec3};
use crate::predictors::Predictor;
use crate::scene::{render_observation, JointType, Observation, OcclusionModel, SampledScene};
use crate::seeds::derive_seed;
use crate::trajectory::{plan_prismatic, plan_revolute, TrajectoryParams, TrajectoryPlan, DEFAULT_STEPS};

/// Success threshold on normalized distance.
pub const SUCCESS_THRESHOLD: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 7;
pub const DEFAULT_MAX_STEPS: usize = 50;
/// Goal magnitude margin as a fraction of the joint range.
pub const GOAL_MARGIN: f64 = 0.1;
const GOAL_TOLERANCE: f64 = 1e-6;
const STALL_DQ: f64 = 1e-8;
const STALL_REPLANS: usize = 3;
const MIN_FLOW: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    FlowBotPP,
    AfOnly,
    NoMpc,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::FlowBotPP => "flowbotpp",
            PolicyKind::AfOnly => "af_only",
            PolicyKind::NoMpc => "no_mpc",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flowbotpp" => Ok(PolicyKind::FlowBotPP),
            "af_only" => Ok(PolicyKind::AfOnly),
            "no_mpc" | "nompc" => Ok(PolicyKind::NoMpc),
            other => Err(Error::InvalidParameter(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub policy: PolicyKind,
    /// Waypoints executed per plan (flowbotpp only).
    pub horizon: usize,
    /// Interpolation steps `K` per plan.
    pub steps: usize,
    /// Revolute goal angle; `None` means remaining range plus margin.
    pub goal_angle: Option<f64>,
    /// Prismatic goal distance; `None` means remaining range plus margin.
    pub goal_distance: Option<f64>,
    pub max_steps: usize,
    pub use_gs: bool,
    pub use_mask: bool,
    pub classifier: ClassifierMode,
    /// Suction compliance: a commanded point farther than this from where
    /// the contact actually ends up breaks the grasp. `None` is ideal suction.
    pub detach_tolerance: Option<f64>,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            policy: PolicyKind::FlowBotPP,
            horizon: DEFAULT_HORIZON,
            steps: DEFAULT_STEPS,
            goal_angle: None,
            goal_distance: None,
            max_steps: DEFAULT_MAX_STEPS,
            use_gs: true,
            use_mask: true,
            classifier: ClassifierMode::Oracle,
            detach_tolerance: None,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        if self.policy == PolicyKind::FlowBotPP && !(1..=self.steps).contains(&self.horizon) {
            return Err(Error::InvalidParameter(format!(
                "H must satisfy 1 <= H <= K (H = {}, K = {})",
                self.horizon, self.steps
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be >= 1".into()));
        }
        for (name, g) in [("goal angle", self.goal_angle), ("goal distance", self.goal_distance)] {
            if let Some(g) = g {
                if !(g.is_finite() && g != 0.0) {
                    return Err(Error::InvalidParameter(format!("{name} must be finite and nonzero")));
                }
            }
        }
        if let Some(t) = self.detach_tolerance {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter("detach tolerance must be positive".into()));
            }
        }
        Ok(())
    }

    /// Horizon label used in tables: the numeric `H`, `1` for af_only and
    /// `nompc` for the open-loop variant.
    pub fn horizon_label(&self) -> String {
        match self.policy {
            PolicyKind::FlowBotPP => self.horizon.to_string(),
            PolicyKind::AfOnly => "1".into(),
            PolicyKind::NoMpc => "nompc".into(),
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}/H={}/K={}/gs={}/mask={}",
            self.policy.as_str(),
            self.horizon_label(),
            self.steps,
            self.use_gs,
            self.use_mask
        )
    }
}

/// Kinematic world: the scene, its joint value and the suction contact
/// (an index into the target part's samples).
#[derive(Debug, Clone)]
pub struct WorldState<'a> {
    pub scene: &'a SampledScene,
    pub q: f64,
    pub attached: bool,
    pub contact: usize,
}

impl<'a> WorldState<'a> {
    pub fn new(scene: &'a SampledScene, q: f64, contact: usize) -> Self {
        WorldState {
            scene,
            q,
            attached: true,
            contact,
        }
    }

    pub fn contact_position(&self) -> Vec3 {
        self.scene.target_point(self.contact, self.q)
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome<'a> {
    pub world: WorldState<'a>,
    pub dq: f64,
    /// Distance between the commanded target and the contact's new position.
    pub residual: f64,
}

/// Moves the joint toward `target`. Revolute: the signed angle, about the
/// true axis, from the contact to the target (both projected onto the plane
/// of rotation). Prismatic: the target displacement along the true axis.
/// The joint value is clamped to its limits.
pub fn step_world<'a>(world: &WorldState<'a>, target: &Vec3) -> StepOutcome<'a> {
    let joint = world.scene.joint();
    let p = world.contact_position();
    let delta = match joint.joint_type {
        JointType::Prismatic => (target - p).dot(&joint.axis),
        JointType::Revolute => {
            let a = nearest_point_on_line(&p, &joint.origin, &joint.axis);
            let u = p - a;
            let w = target - a;
            let w_perp = w - joint.axis * joint.axis.dot(&w);
            let sin = joint.axis.dot(&u.cross(&w_perp));
            sin.atan2(u.dot(&w_perp))
        }
    };
    let q = joint.clamp(world.q + delta);
    let next = WorldState { q, ..world.clone() };
    let residual = (target - next.contact_position()).norm();
    StepOutcome {
        dq: q - world.q,
        world: next,
        residual,
    }
}

/// Masked point with the largest flow norm; lowest index on ties.
pub fn select_contact(obs: &Observation, flow: &[Vec3]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in obs.masked_indices() {
        let n = flow[i].norm();
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((i, n));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoContact)
}

pub fn normalized_distance(q_end: f64, q_goal: f64, q_init: f64) -> f64 {
    (q_end - q_goal).abs() / (q_goal - q_init).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Goal,
    MaxSteps,
    Stalled,
    Occluded,
    /// The open-loop plan ran out (or lost its grasp) without reaching the goal.
    PlanExhausted,
    NoContact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub q_init: f64,
    pub q_goal: f64,
    /// Joint value before the first step, then after every step.
    pub q_trace: Vec<f64>,
    pub step_increments: Vec<f64>,
    /// Contact position aligned with `q_trace`.
    pub contact_trace: Vec<Vec3>,
    /// Observation index of the initial grasp.
    pub contact_index: Option<usize>,
    pub articulation_type: Option<JointType>,
    /// Goal angle or distance handed to the planner.
    pub goal_magnitude: f64,
    /// The plan computed from the initial observation, if any.
    pub first_plan: Option<TrajectoryPlan>,
    pub normalized_distance: f64,
    pub success: bool,
    pub steps_executed: usize,
    pub replan_count: usize,
    pub detach_count: usize,
    pub termination: Termination,
}

impl RolloutResult {
    pub fn q_end(&self) -> f64 {
        *self.q_trace.last().expect("trace holds the initial value")
    }

    /// Population variance of per-step increments.
    pub fn dq_variance(&self) -> f64 {
        let n = self.step_increments.len();
        if n == 0 {
            return 0.0;
        }
        let mean = self.step_increments.iter().sum::<f64>() / n as f64;
        self.step_increments.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64
    }

    pub fn opening_fraction(&self) -> f64 {
        (self.q_end() - self.q_init) / (self.q_goal - self.q_init)
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,q,dq,contact_x,contact_y,contact_z")?;
        for (i, (q, c)) in self.q_trace.iter().zip(&self.contact_trace).enumerate() {
            let dq = if i == 0 { 0.0 } else { self.step_increments[i - 1] };
            writeln!(out, "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", q, dq, c.x, c.y, c.z)?;
        }
        Ok(())
    }
}

struct Recorder {
    q_init: f64,
    q_goal: f64,
    goal_magnitude: f64,
    first_plan: Option<TrajectoryPlan>,
    q_trace: Vec<f64>,
    dq: Vec<f64>,
    contacts: Vec<Vec3>,
}

impl Recorder {
    fn push(&mut self, q: f64, dq: f64, contact: Vec3) {
        self.q_trace.push(q);
        self.dq.push(dq);
        self.contacts.push(contact);
    }

    fn finish(
        self,
        contact_index: Option<usize>,
        articulation_type: Option<JointType>,
        replans: usize,
        detaches: usize,
        termination: Termination,
    ) -> RolloutResult {
        let q_end = *self.q_trace.last().expect("initial value recorded");
        let nd = normalized_distance(q_end, self.q_goal, self.q_init);
        RolloutResult {
            q_init: self.q_init,
            q_goal: self.q_goal,
            steps_executed: self.dq.len(),
            q_trace: self.q_trace,
            step_increments: self.dq,
            contact_trace: self.contacts,
            contact_index,
            articulation_type,
            goal_magnitude: self.goal_magnitude,
            first_plan: self.first_plan,
            normalized_distance: nd,
            success: nd <= SUCCESS_THRESHOLD,
            replan_count: replans,
            detach_count: detaches,
            termination,
        }
    }
}

/// Index in `obs` of target sample `contact`, or else of the visible masked
/// point nearest to `position`.
fn contact_in_observation(obs: &Observation, target_part: usize, contact: usize, position: &Vec3) -> Option<usize> {
    obs.masked_indices()
        .find(|&i| obs.source_part[i] == target_part && obs.source_index[i] == contact)
        .or_else(|| {
            obs.masked_indices().min_by(|&a, &b| {
                let da = (obs.points[a] - position).norm_squared();
                let db = (obs.points[b] - position).norm_squared();
                da.total_cmp(&db)
            })
        })
}

/// Runs one episode from the closed state. The first observation uses
/// `occ.seed` directly; later observations and all predictions use seeds
/// derived from it by observation count.
pub fn run_policy(
    scene: &SampledScene,
    predictor: &Predictor,
    occ: &OcclusionModel,
    params: &PolicyParams,
) -> Result<RolloutResult> {
    params.validate()?;
    let joint = scene.joint();
    let q_init = joint.lower;
    let q_goal = joint.upper;
    let default_goal = (q_goal - q_init) + GOAL_MARGIN * joint.range();
    let traj = TrajectoryParams::new(
        params.steps,
        params.goal_angle.unwrap_or(default_goal),
        params.goal_distance.unwrap_or(default_goal),
    )?;
    let target_part = scene.target_index();

    let mut rec = Recorder {
        q_init,
        q_goal,
        goal_magnitude: traj.goal_angle,
        first_plan: None,
        q_trace: Vec::new(),
        dq: Vec::new(),
        contacts: Vec::new(),
    };

    let mut obs = render_observation(scene, q_init, occ)?;
    let mut fields = predictor.predict(&scene.scene, &obs, 0)?;
    let Ok(first) = select_contact(&obs, &fields.flow) else {
        rec.q_trace.push(q_init);
        rec.contacts.push(Vec3::zeros());
        return Ok(rec.finish(None, None, 0, 0, Termination::NoContact));
    };
    let kind = classify_articulation(&scene.scene, &fields, params.classifier);
    if kind == JointType::Prismatic {
        rec.goal_magnitude = traj.goal_distance;
    }
    let mut world = WorldState::new(scene, q_init, obs.source_index[first]);
    rec.q_trace.push(q_init);
    rec.contacts.push(world.contact_position());

    let af_step = match kind {
        JointType::Revolute => traj.goal_angle / traj.steps as f64 * joint.distance_to_axis(&world.contact_position()),
        JointType::Prismatic => traj.goal_distance / traj.steps as f64,
    };

    let mut observation = 0u64;
    let mut replans = 0usize;
    let mut detaches = 0usize;
    let mut stall_streak = 0usize;
    let mut empty_streak = 0usize;
    let termination;

    loop {
        if observation > 0 {
            let seeded = occ.with_seed(derive_seed(occ.seed, "observe", observation));
            obs = render_observation(scene, world.q, &seeded)?;
            fields = predictor.predict(&scene.scene, &obs, observation)?;
        }
        observation += 1;
        replans += 1;

        if obs.mask_count() == 0 {
            empty_streak += 1;
            if empty_streak >= STALL_REPLANS {
                termination = Termination::Occluded;
                break;
            }
            continue;
        }
        empty_streak = 0;

        if !world.attached {
            let idx = select_contact(&obs, &fields.flow)?;
            world.contact = obs.source_index[idx];
            world.attached = true;
        }

        let p = world.contact_position();
        let targets: Option<Vec<Vec3>> = match params.policy {
            PolicyKind::FlowBotPP | PolicyKind::NoMpc => {
                let plan =
                    aggregate_axis(&obs, &fields, kind, params.use_gs, params.use_mask).and_then(|est| match kind {
                        JointType::Revolute => plan_revolute(&p, &est.direction, &est.origin, &traj),
                        JointType::Prismatic => plan_prismatic(&p, &est.direction, &traj),
                    });
                match plan {
                    Ok(plan) => {
                        let waypoints = plan.waypoints[1..].to_vec();
                        if replans == 1 {
                            rec.first_plan = Some(plan);
                        }
                        let h = if params.policy == PolicyKind::NoMpc {
                            params.steps
                        } else {
                            params.horizon
                        };
                        Some(waypoints[..h].to_vec())
                    }
                    Err(e) => {
                        log::debug!("replan {replans}: {e}");
                        None
                    }
                }
            }
            PolicyKind::AfOnly => contact_in_observation(&obs, target_part, world.contact, &p)
                .map(|i| fields.flow[i])
                .filter(|f| f.norm() > MIN_FLOW)
                .map(|f| vec![p + f.normalize() * af_step]),
        };

        let mut progress = 0.0;
        let mut reached = false;
        for target in targets.iter().flatten() {
            if rec.dq.len() >= params.max_steps {
                break;
            }
            let out = step_world(&world, target);
            if params.detach_tolerance.is_some_and(|tol| out.residual > tol) {
                world.attached = false;
                detaches += 1;
                rec.push(world.q, 0.0, world.contact_position());
                break;
            }
            world = out.world;
            progress += out.dq.abs();
            rec.push(world.q, out.dq, world.contact_position());
            if world.q >= q_goal - GOAL_TOLERANCE {
                reached = true;
                break;
            }
        }

        if reached {
            termination = Termination::Goal;
            break;
        }
        if rec.dq.len() >= params.max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        if params.policy == PolicyKind::NoMpc {
            termination = Termination::PlanExhausted;
            break;
        }
        if progress < STALL_DQ {
            stall_streak += 1;
            if stall_streak >= STALL_REPLANS {
                termination = Termination::Stalled;
                break;
            }
        } else {
            stall_streak = 0;
        }
    }

    Ok(rec.finish(Some(first), Some(kind), replans, detaches, termination))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, ArticulatedScene, ChildPart, JointSpec, Part, PartGeometry};
    use crate::trajectory::rodrigues;

    fn door_scene() -> SampledScene {
        let scene = ArticulatedScene {
            name: "ref_door".into(),
            base_parts: vec![Part {
                id: "body".into(),
                geometry: PartGeometry::new(Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.5, 0.6, 1.0), 200).unwrap(),
            }],
            child_parts: vec![ChildPart {
                id: "door".into(),
                parent: "body".into(),
                geometry: PartGeometry::new(Vec3::new(0.26, 0.0, 0.5), Vec3::new(0.02, 0.6, 1.0), 500).unwrap(),
                joint: JointSpec::new(
                    "hinge",
                    JointType::Revolute,
                    Vec3::z(),
                    Vec3::new(0.25, 0.3, 0.0),
                    0.0,
                    2.0,
                )
                .unwrap(),
            }],
            target_part: "door".into(),
        };
        SampledScene::new(scene, 4)
    }

    #[test]
    fn step_to_current_position_is_noop() {
        let s = door_scene();
        let w = WorldState::new(&s, 0.5, 3);
        let out = step_world(&w, &w.contact_position());
        assert_eq!(out.dq, 0.0);
        assert!(out.residual < 1e-15);
    }

    #[test]
    fn step_to_ground_truth_waypoint() {
        let s = door_scene();
        let j = s.joint().clone();
        let w = WorldState::new(&s, 0.5, 3);
        let p = w.contact_position();
        let target = rodrigues(&j.axis, 0.1).unwrap().apply(&(p - j.origin)) + j.origin;
        let out = step_world(&w, &target);
        assert!((out.dq - 0.1).abs() < 1e-10);
        assert!(out.residual < 1e-12);
    }

    #[test]
    fn axial_displacement_is_ignored() {
        let s = door_scene();
        let w = WorldState::new(&s, 0.7, 10);
        let target = w.contact_position() + s.joint().axis * 0.3;
        let out = step_world(&w, &target);
        assert!(out.dq.abs() < 1e-12);
        assert!((out.residual - 0.3).abs() < 1e-12);
    }

    #[test]
    fn steps_clamp_to_limits() {
        let s = door_scene();
        let j = s.joint().clone();
        let w = WorldState::new(&s, 1.9, 3);
        let p = w.contact_position();
        let target = rodrigues(&j.axis, 0.5).unwrap().apply(&(p - j.origin)) + j.origin;
        let out = step_world(&w, &target);
        assert_eq!(out.world.q, 2.0);
        assert!((out.dq - 0.1).abs() < 1e-12);
    }

    #[test]
    fn contact_is_farthest_point_for_revolute() {
        let s = door_scene();
        let obs = render_observation(&s, 0.0, &OcclusionModel::none()).unwrap();
        let fields = crate::predictors::predict_exact(&s.scene, &obs).unwrap();
        let idx = select_contact(&obs, &fields.flow).unwrap();
        let r = s.joint().distance_to_axis(&obs.points[idx]);
        let r_max = obs
            .masked_indices()
            .map(|i| s.joint().distance_to_axis(&obs.points[i]))
            .fold(0.0, f64::max);
        assert!((r - r_max).abs() < 1e-12);
    }

    #[test]
    fn prismatic_contact_tie_breaks_to_first_masked() {
        let g = generate_scene(1, 3, 100);
        let s = SampledScene::new(g.scene, 1);
        let obs = render_observation(&s, 0.0, &OcclusionModel::none()).unwrap();
        let fields = crate::predictors::predict_exact(&s.scene, &obs).unwrap();
        let first = obs.masked_indices().next().unwrap();
        assert_eq!(select_contact(&obs, &fields.flow).unwrap(), first);
    }

    #[test]
    fn empty_mask_has_no_contact() {
        let obs = Observation::from_points(vec![Vec3::x()], vec![false], 0.0).unwrap();
        assert!(matches!(select_contact(&obs, &[Vec3::x()]), Err(Error::NoContact)));
    }

    #[test]
    fn exact_rollouts_reach_goal_monotonically() {
        let s = door_scene();
        for policy in [PolicyKind::FlowBotPP, PolicyKind::AfOnly, PolicyKind::NoMpc] {
            let params = PolicyParams {
                policy,
                ..PolicyParams::default()
            };
            let r = run_policy(&s, &Predictor::Exact, &OcclusionModel::none(), &params).unwrap();
            assert!(r.success, "{policy:?}: {r:?}");
            assert!(r.normalized_distance <= 0.05);
            assert!(r.q_trace.windows(2).all(|w| w[1] >= w[0]));
            let recomputed = normalized_distance(r.q_end(), r.q_goal, r.q_init);
            assert!((recomputed - r.normalized_distance).abs() <= 1e-12);
        }
    }

    #[test]
    fn full_occlusion_fails_immediately() {
        let s = door_scene();
        let occ = OcclusionModel::new(1.0, 0.0, 0).unwrap();
        let r = run_policy(&s, &Predictor::Exact, &occ, &PolicyParams::default()).unwrap();
        assert_eq!(r.termination, Termination::NoContact);
        assert_eq!(r.normalized_distance, 1.0);
        assert!(!r.success);
    }

    #[test]
    fn metric_definition_endpoints() {
        assert_eq!(normalized_distance(2.0, 2.0, 0.0), 0.0);
        assert_eq!(normalized_distance(0.0, 2.0, 0.0), 1.0);
    }

    #[test]
    fn params_validation() {
        for horizon in [0, 21] {
            let p = PolicyParams {
                horizon,
                ..PolicyParams::default()
            };
            assert!(p.validate().is_err());
        }
        let p = PolicyParams {
            max_steps: 0,
            ..PolicyParams::default()
        };
        assert!(p.validate().is_err());
    }
}
