//! Seeded batch evaluation over scenes, policy variants and trials.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::predictors::{NoiseModel, Predictor};
use crate::rollout::{run_policy, PolicyKind, PolicyParams, RolloutResult};
use crate::scene::{OcclusionModel, SampledScene};
use crate::seeds::derive_seed;

pub const METRICS_CSV_HEADER: &str =
    "scene,policy,H,use_gs,use_mask,noise_preset,trial,seed,norm_dist,success,steps,replans,dq_var,wall_ms";
pub const SUMMARY_CSV_HEADER: &str =
    "policy,H,use_gs,use_mask,noise_preset,rollouts,mean_norm_dist,success_rate,mean_dq_var,mean_opening,mean_wall_ms";

/// Predictor, occlusion and grasp compliance shared by every rollout of an
/// evaluation. Seeds inside are replaced per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePreset {
    pub name: String,
    pub predictor: Predictor,
    pub occlusion: OcclusionModel,
    pub detach_tolerance: Option<f64>,
}

impl NoisePreset {
    /// Exact fields, full visibility, ideal suction.
    pub fn exact() -> Self {
        NoisePreset {
            name: "exact".into(),
            predictor: Predictor::Exact,
            occlusion: OcclusionModel::none(),
            detach_tolerance: None,
        }
    }

    /// Noisy fields with a projection bias, opening-coupled occlusion and a
    /// compliant suction cup.
    pub fn reference() -> Self {
        NoisePreset {
            name: "reference".into(),
            predictor: Predictor::Noisy(NoiseModel::new(0.5, 0.1, 10.0, 0).expect("valid constants")),
            occlusion: OcclusionModel::new(0.1, 0.6, 0).expect("valid constants"),
            detach_tolerance: Some(0.03),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "exact" | "none" => Ok(Self::exact()),
            "reference" => Ok(Self::reference()),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise preset `{other}` (expected exact or reference)"
            ))),
        }
    }

    /// Params with this preset's grasp compliance applied.
    pub fn apply(&self, params: &PolicyParams) -> PolicyParams {
        PolicyParams {
            detach_tolerance: self.detach_tolerance,
            ..params.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalScene {
    pub name: String,
    pub scene: SampledScene,
}

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub scene: String,
    pub variant: usize,
    pub params: PolicyParams,
    pub preset: String,
    pub trial: usize,
    pub seed: u64,
    pub result: RolloutResult,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub params: PolicyParams,
    pub preset: String,
    pub rollouts: usize,
    pub mean_norm_dist: f64,
    pub success_rate: f64,
    pub mean_dq_var: f64,
    pub mean_opening: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Sorted by scene order, variant order, trial.
    pub rows: Vec<TrialRow>,
    /// One row per variant, in variant order.
    pub summary: Vec<SummaryRow>,
}

/// Seed of one rollout, hashed from the base seed, scene, variant and trial.
pub fn trial_seed(base_seed: u64, scene: &str, params: &PolicyParams, trial: usize) -> u64 {
    derive_seed(base_seed, &format!("{scene}|{}", params.label()), trial as u64)
}

/// Runs every (scene, variant, trial) combination in parallel.
pub fn evaluate(
    scenes: &[EvalScene],
    preset: &NoisePreset,
    variants: &[PolicyParams],
    trials: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(Error::InvalidParameter("evaluation needs at least one scene".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    if variants.is_empty() {
        return Err(Error::InvalidParameter(
            "evaluation needs at least one policy variant".into(),
        ));
    }
    for v in variants {
        v.validate()?;
    }

    let jobs: Vec<(usize, usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..variants.len()).flat_map(move |v| (0..trials).map(move |t| (s, v, t))))
        .collect();

    let rows = jobs
        .par_iter()
        .map(|&(s, v, t)| {
            let entry = &scenes[s];
            let params = preset.apply(&variants[v]);
            let seed = trial_seed(base_seed, &entry.name, &variants[v], t);
            let predictor = preset.predictor.with_seed(derive_seed(seed, "predictor", 0));
            let occlusion = preset.occlusion.with_seed(derive_seed(seed, "occlusion", 0));
            let start = Instant::now();
            let result = run_policy(&entry.scene, &predictor, &occlusion, &params)?;
            Ok(TrialRow {
                scene: entry.name.clone(),
                variant: v,
                params: variants[v].clone(),
                preset: preset.name.clone(),
                trial: t,
                seed,
                result,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = variants
        .iter()
        .enumerate()
        .map(|(v, params)| summarize(params, &preset.name, rows.iter().filter(|r| r.variant == v)))
        .collect();
    Ok(EvalReport { rows, summary })
}

fn summarize<'a>(params: &PolicyParams, preset: &str, rows: impl Iterator<Item = &'a TrialRow>) -> SummaryRow {
    let mut n = 0usize;
    let (mut nd, mut succ, mut var, mut open, mut wall) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        n += 1;
        nd += r.result.normalized_distance;
        succ += f64::from(u8::from(r.result.success));
        var += r.result.dq_variance();
        open += r.result.opening_fraction();
        wall += r.wall_ms;
    }
    let n_f = n.max(1) as f64;
    SummaryRow {
        params: params.clone(),
        preset: preset.to_string(),
        rollouts: n,
        mean_norm_dist: nd / n_f,
        success_rate: succ / n_f,
        mean_dq_var: var / n_f,
        mean_opening: open / n_f,
        mean_wall_ms: wall / n_f,
    }
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[TrialRow]) -> Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.16e},{},{},{},{:.16e},{:.3}",
            r.scene,
            r.params.policy.as_str(),
            r.params.horizon_label(),
            r.params.use_gs,
            r.params.use_mask,
            r.preset,
            r.trial,
            r.seed,
            r.result.normalized_distance,
            r.result.success,
            r.result.steps_executed,
            r.result.replan_count,
            r.result.dq_variance(),
            r.wall_ms
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut out: W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.4},{:.6e},{:.6},{:.3}",
            r.params.policy.as_str(),
            r.params.horizon_label(),
            r.params.use_gs,
            r.params.use_mask,
            r.preset,
            r.rollouts,
            r.mean_norm_dist,
            r.success_rate,
            r.mean_dq_var,
            r.mean_opening,
            r.mean_wall_ms
        )?;
    }
    Ok(())
}

/// Gnuplot script drawing mean normalized distance per variant from a
/// summary CSV.
pub fn gnuplot_script(summary_csv: &str, png: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set terminal pngcairo size 800,500\n\
         set output '{png}'\n\
         set style data histogram\n\
         set style fill solid 0.7\n\
         set ylabel 'mean normalized distance'\n\
         set xtics rotate by -30\n\
         plot '{summary_csv}' every ::1 using 7:xtic(stringcolumn(1).' H='.stringcolumn(2)) title ''\n"
    )
}

/// Parses an H-sweep list such as `1,3,5,7,9,nompc` into variants derived
/// from `base`.
pub fn horizon_sweep(list: &str, base: &PolicyParams) -> Result<Vec<PolicyParams>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| match item {
            "nompc" | "no_mpc" => Ok(PolicyParams {
                policy: PolicyKind::NoMpc,
                ..base.clone()
            }),
            h => {
                let horizon = h
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidParameter(format!("bad horizon `{h}` in sweep")))?;
                Ok(PolicyParams {
                    policy: PolicyKind::FlowBotPP,
                    horizon,
                    ..base.clone()
                })
            }
        })
        .collect()
}
