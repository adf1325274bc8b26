//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 degenerate estimation, 3 I/O or
//! malformed input.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimation::{aggregate_axis, heuristic_articulation_type, AxisEstimate};
use crate::eval::{
    evaluate, gnuplot_script, horizon_sweep, write_metrics_csv, write_summary_csv, EvalScene, NoisePreset,
};
use crate::fields::{gt_fields, read_fields_csv, write_fields_csv, DenseFields};
use crate::geometry::{parse_triple, Vec3};
use crate::predictors::{NoiseModel, Predictor};
use crate::rollout::{run_policy, PolicyKind, PolicyParams, DEFAULT_HORIZON, DEFAULT_MAX_STEPS};
use crate::scene::{
    make_scenes, parse_scene, render_observation, JointType, Observation, OcclusionModel, SampledScene,
    DEFAULT_SAMPLE_COUNT,
};
use crate::seeds::derive_seed;
use crate::trajectory::{
    plan_full_pose, plan_prismatic, plan_revolute, write_trajectory_csv, RotationMatrix, TrajectoryParams,
    DEFAULT_STEPS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "artflow",
    version,
    about = "Articulation flow estimation, planning and closed-loop evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic suite of door and drawer scenes.
    MakeScenes(MakeScenesArgs),
    /// Render a scene and write its exact fields as CSV.
    Gen(GenArgs),
    /// Estimate the joint axis from a fields CSV and print it as JSON.
    Infer(InferArgs),
    /// Plan a trajectory from an axis estimate.
    Plan(PlanArgs),
    /// Run one closed-loop episode and print the result as JSON.
    Rollout(RolloutArgs),
    /// Evaluate policy variants over a directory of scenes.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct MakeScenesArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Surface samples per part.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OcclusionArgs {
    #[arg(long, default_value_t = 0.0)]
    base_dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    coupled_dropout: f64,
    #[arg(long, default_value_t = 0)]
    occlusion_seed: u64,
}

impl OcclusionArgs {
    fn model(&self) -> Result<OcclusionModel> {
        OcclusionModel::new(self.base_dropout, self.coupled_dropout, self.occlusion_seed)
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Joint value; defaults to the lower limit.
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    /// Seed for surface sampling.
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    #[command(flatten)]
    occlusion: OcclusionArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    fields: PathBuf,
    /// revolute, prismatic or heuristic.
    #[arg(long = "type", default_value = "revolute")]
    kind: String,
    #[arg(long)]
    no_gs: bool,
    #[arg(long)]
    no_mask: bool,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    axis: PathBuf,
    /// Contact point as x,y,z.
    #[arg(long, allow_hyphen_values = true)]
    contact: String,
    #[arg(long = "K", default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, allow_negative_numbers = true)]
    goal_angle: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    goal_distance: Option<f64>,
    /// Attach gripper orientations starting from the identity.
    #[arg(long)]
    full_pose: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    #[arg(long = "H", default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long = "K", default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,
    #[arg(long)]
    no_gs: bool,
    #[arg(long)]
    no_mask: bool,
    /// oracle or heuristic.
    #[arg(long, default_value = "oracle")]
    classifier: String,
    #[arg(long, allow_negative_numbers = true)]
    goal_angle: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    goal_distance: Option<f64>,
}

impl PolicyArgs {
    fn params(&self, policy: PolicyKind) -> Result<PolicyParams> {
        let params = PolicyParams {
            policy,
            horizon: self.horizon,
            steps: self.steps,
            goal_angle: self.goal_angle,
            goal_distance: self.goal_distance,
            max_steps: self.max_steps,
            use_gs: !self.no_gs,
            use_mask: !self.no_mask,
            classifier: self.classifier.parse()?,
            detach_tolerance: None,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
struct RolloutArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "flowbotpp")]
    policy: String,
    #[command(flatten)]
    policy_args: PolicyArgs,
    /// exact or reference; explicit noise and occlusion flags override it.
    #[arg(long, default_value = "exact")]
    preset: String,
    #[arg(long)]
    flow_sigma: Option<f64>,
    #[arg(long)]
    proj_sigma: Option<f64>,
    #[arg(long)]
    proj_bias_deg: Option<f64>,
    #[arg(long)]
    base_dropout: Option<f64>,
    #[arg(long)]
    coupled_dropout: Option<f64>,
    #[arg(long)]
    detach_tolerance: Option<f64>,
    /// Trial seed; noise and occlusion seeds derive from it unless given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    occlusion_seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the plan computed from the initial observation.
    #[arg(long)]
    plan_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scenes: PathBuf,
    /// Comma-separated horizons; `nompc` adds the open-loop variant.
    #[arg(long = "H-sweep")]
    h_sweep: Option<String>,
    /// Comma-separated policies evaluated alongside any sweep.
    #[arg(long)]
    policy: Option<String>,
    /// Add a copy of every variant without Gram-Schmidt correction.
    #[arg(long)]
    ablate_gs: bool,
    /// Add a copy of every variant that ignores the part mask.
    #[arg(long)]
    ablate_mask: bool,
    #[command(flatten)]
    policy_args: PolicyArgs,
    #[arg(long, default_value = "exact")]
    preset: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metrics CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write `<out>.summary.csv` and a gnuplot script `<out>.gp`.
    #[arg(long)]
    emit_gnuplot: bool,
}

/// Runs the CLI with `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) | Error::OutOfLimits { .. } => EXIT_USAGE,
        Error::Estimation(_) | Error::DegenerateGeometry(_) | Error::NoContact => EXIT_DEGENERATE,
        Error::Io(_)
        | Error::Json(_)
        | Error::Xml(_)
        | Error::Parse { .. }
        | Error::Format { .. }
        | Error::LengthMismatch { .. } => EXIT_IO,
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::MakeScenes(a) => cmd_make_scenes(&a, stdout),
        Command::Gen(a) => cmd_gen(&a),
        Command::Infer(a) => cmd_infer(&a, stdout),
        Command::Plan(a) => cmd_plan(&a, stdout),
        Command::Rollout(a) => cmd_rollout(&a, stdout),
        Command::Eval(a) => cmd_eval(&a, stdout),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_scene(path: &Path, sample_seed: u64) -> Result<SampledScene> {
    let text = fs::read_to_string(path)?;
    Ok(SampledScene::new(parse_scene(&text)?, sample_seed))
}

fn cmd_make_scenes(a: &MakeScenesArgs, stdout: &mut dyn Write) -> Result<()> {
    if a.count == 0 {
        return Err(Error::InvalidParameter("count must be >= 1".into()));
    }
    if a.samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    fs::create_dir_all(&a.out)?;
    for g in make_scenes(a.count, a.seed, a.samples) {
        let path = a.out.join(&g.file_name);
        fs::write(&path, &g.text)?;
        writeln!(stdout, "{}", path.display())?;
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let scene = load_scene(&a.scene, a.sample_seed)?;
    let q = a.q.unwrap_or(scene.joint().lower);
    let obs = render_observation(&scene, q, &a.occlusion.model()?)?;
    let fields = if obs.mask_count() == 0 {
        DenseFields::zeros(obs.mask.clone())
    } else {
        gt_fields(&obs, scene.joint())?
    };
    let mut out = create(&a.out)?;
    write_fields_csv(&mut out, &obs.points, &fields)?;
    out.flush()?;
    Ok(())
}

fn cmd_infer(a: &InferArgs, stdout: &mut dyn Write) -> Result<()> {
    let table = read_fields_csv(BufReader::new(File::open(&a.fields)?))?;
    let obs = Observation::from_points(table.points, table.fields.mask.clone(), 0.0)?;
    let kind = match a.kind.as_str() {
        "heuristic" => heuristic_articulation_type(&table.fields),
        other => other.parse::<JointType>()?,
    };
    let est = aggregate_axis(&obs, &table.fields, kind, !a.no_gs, !a.no_mask)?;
    writeln!(stdout, "{}", est.to_json())?;
    Ok(())
}

fn cmd_plan(a: &PlanArgs, stdout: &mut dyn Write) -> Result<()> {
    let est = AxisEstimate::from_json(&fs::read_to_string(&a.axis)?)?;
    let contact = parse_triple(&a.contact.replace(',', " "))
        .ok_or_else(|| Error::InvalidParameter(format!("--contact expects x,y,z (got `{}`)", a.contact)))?;
    let (angle, distance) = match est.articulation_type {
        JointType::Revolute => (required(a.goal_angle, "--goal-angle")?, 1.0),
        JointType::Prismatic => (1.0, required(a.goal_distance, "--goal-distance")?),
    };
    let params = TrajectoryParams::new(a.steps, angle, distance)?;
    let plan = if a.full_pose {
        plan_full_pose(&contact, &RotationMatrix::identity(), &est, &params)?
    } else {
        match est.articulation_type {
            JointType::Revolute => plan_revolute(&contact, &est.direction, &est.origin, &params)?,
            JointType::Prismatic => plan_prismatic(&contact, &est.direction, &params)?,
        }
    };
    match &a.out {
        Some(path) => {
            let mut out = create(path)?;
            write_trajectory_csv(&mut out, &plan)?;
            out.flush()?;
        }
        None => write_trajectory_csv(stdout, &plan)?,
    }
    Ok(())
}

fn required(v: Option<f64>, flag: &str) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidParameter(format!("{flag} is required for this joint type")))
}

fn rollout_preset(a: &RolloutArgs) -> Result<NoisePreset> {
    let mut preset = NoisePreset::by_name(&a.preset)?;
    let base = match preset.predictor {
        Predictor::Noisy(n) => n,
        Predictor::Exact => NoiseModel::new(0.0, 0.0, 0.0, 0)?,
    };
    let noise = NoiseModel::new(
        a.flow_sigma.unwrap_or(base.flow_sigma),
        a.proj_sigma.unwrap_or(base.proj_sigma),
        a.proj_bias_deg.unwrap_or(base.proj_bias_deg),
        a.noise_seed.unwrap_or_else(|| derive_seed(a.seed, "predictor", 0)),
    )?;
    preset.predictor = if noise.is_zero() {
        Predictor::Exact
    } else {
        Predictor::Noisy(noise)
    };
    preset.occlusion = OcclusionModel::new(
        a.base_dropout.unwrap_or(preset.occlusion.base_dropout),
        a.coupled_dropout.unwrap_or(preset.occlusion.opening_coupled_dropout),
        a.occlusion_seed.unwrap_or_else(|| derive_seed(a.seed, "occlusion", 0)),
    )?;
    if a.detach_tolerance.is_some() {
        preset.detach_tolerance = a.detach_tolerance;
    }
    Ok(preset)
}

fn cmd_rollout(a: &RolloutArgs, stdout: &mut dyn Write) -> Result<()> {
    let scene = load_scene(&a.scene, a.sample_seed)?;
    let preset = rollout_preset(a)?;
    let params = preset.apply(&a.policy_args.params(a.policy.parse()?)?);
    params.validate()?;
    let result = run_policy(&scene, &preset.predictor, &preset.occlusion, &params)?;

    if let Some(path) = &a.trace_out {
        let mut out = create(path)?;
        result.write_trace_csv(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = &a.plan_out {
        let plan = result
            .first_plan
            .as_ref()
            .ok_or_else(|| Error::Estimation("no plan was computed from the initial observation".into()))?;
        let mut out = create(path)?;
        write_trajectory_csv(&mut out, plan)?;
        out.flush()?;
    }

    let contact = result.contact_trace.first().copied().unwrap_or_else(Vec3::zeros);
    let doc = json!({
        "scene": scene.scene.name,
        "policy": params.policy.as_str(),
        "H": params.horizon_label(),
        "K": params.steps,
        "type": result.articulation_type.map(JointType::as_str),
        "contact_index": result.contact_index,
        "contact": [contact.x, contact.y, contact.z],
        "goal": result.goal_magnitude,
        "q_init": result.q_init,
        "q_goal": result.q_goal,
        "q_end": result.q_end(),
        "normalized_distance": result.normalized_distance,
        "success": result.success,
        "steps": result.steps_executed,
        "replans": result.replan_count,
        "detaches": result.detach_count,
        "dq_var": result.dq_variance(),
        "termination": format!("{:?}", result.termination).to_lowercase(),
    });
    writeln!(stdout, "{doc}")?;
    Ok(())
}

fn load_scene_dir(dir: &Path, seed: u64) -> Result<Vec<EvalScene>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "urdf"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParameter(format!("no .urdf files in {}", dir.display())));
    }
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(EvalScene {
                name: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                scene: load_scene(p, derive_seed(seed, "sample", i as u64))?,
            })
        })
        .collect()
}

fn eval_variants(a: &EvalArgs) -> Result<Vec<PolicyParams>> {
    let base = a.policy_args.params(PolicyKind::FlowBotPP)?;
    let mut variants = match &a.h_sweep {
        Some(spec) => horizon_sweep(spec, &base)?,
        None => Vec::new(),
    };
    let policies = a
        .policy
        .clone()
        .or_else(|| a.h_sweep.is_none().then(|| "flowbotpp".to_string()));
    for name in policies
        .iter()
        .flat_map(|p| p.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        variants.push(PolicyParams {
            policy: name.parse()?,
            ..base.clone()
        });
    }
    if a.ablate_gs {
        let extra: Vec<_> = variants
            .iter()
            .map(|v| PolicyParams {
                use_gs: false,
                ..v.clone()
            })
            .collect();
        variants.extend(extra);
    }
    if a.ablate_mask {
        let extra: Vec<_> = variants
            .iter()
            .map(|v| PolicyParams {
                use_mask: false,
                ..v.clone()
            })
            .collect();
        variants.extend(extra);
    }
    let mut unique: Vec<PolicyParams> = Vec::with_capacity(variants.len());
    for v in variants {
        if !unique.contains(&v) {
            unique.push(v);
        }
    }
    Ok(unique)
}

fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let preset = NoisePreset::by_name(&a.preset)?;
    let variants = eval_variants(a)?;
    let scenes = load_scene_dir(&a.scenes, a.seed)?;
    let report = evaluate(&scenes, &preset, &variants, a.trials, a.seed)?;

    let mut out = create(&a.out)?;
    write_metrics_csv(&mut out, &report.rows)?;
    out.flush()?;
    write_summary_csv(&mut *stdout, &report.summary)?;

    if a.emit_gnuplot {
        let summary_path = with_suffix(&a.out, ".summary.csv");
        let mut summary = create(&summary_path)?;
        write_summary_csv(&mut summary, &report.summary)?;
        summary.flush()?;
        let png = with_suffix(&a.out, ".png");
        fs::write(
            with_suffix(&a.out, ".gp"),
            gnuplot_script(&summary_path.to_string_lossy(), &png.to_string_lossy()),
        )?;
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
