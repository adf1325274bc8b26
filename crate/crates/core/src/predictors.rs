//! Field predictors: the boundary where a learned model would plug in.
//! Exact ground truth, a seeded noisy oracle, or fields replayed from CSV.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::{gt_fields, read_fields_csv, DenseFields};
use crate::geometry::perpendicular_basis;
use crate::scene::{ArticulatedScene, Observation};
use crate::seeds::{derive_seed, rng};
use crate::trajectory::rodrigues;

/// Per-point perturbation of exact fields.
///
/// * `flow_sigma` (rad): each flow is rotated by `|N(0, σ)|` about a uniformly
///   random axis perpendicular to it.
/// * `proj_sigma`: each projection is scaled by `1 + N(0, σ)`.
/// * `proj_bias_deg`: each projection then gets a component along the
///   predicted flow so that it leans `bias` degrees toward it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub flow_sigma: f64,
    pub proj_sigma: f64,
    pub proj_bias_deg: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(flow_sigma: f64, proj_sigma: f64, proj_bias_deg: f64, seed: u64) -> Result<Self> {
        if !(flow_sigma >= 0.0 && proj_sigma >= 0.0) || !flow_sigma.is_finite() || !proj_sigma.is_finite() {
            return Err(Error::InvalidParameter("noise sigmas must be finite and >= 0".into()));
        }
        if !(0.0..90.0).contains(&proj_bias_deg) {
            return Err(Error::InvalidParameter("proj_bias_deg must lie in [0, 90)".into()));
        }
        Ok(NoiseModel {
            flow_sigma,
            proj_sigma,
            proj_bias_deg,
            seed,
        })
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseModel { seed, ..self }
    }

    pub fn is_zero(&self) -> bool {
        self.flow_sigma == 0.0 && self.proj_sigma == 0.0 && self.proj_bias_deg == 0.0
    }
}

/// Exact fields for the scene's target joint. An empty mask yields zeros.
pub fn predict_exact(scene: &ArticulatedScene, obs: &Observation) -> Result<DenseFields> {
    if obs.mask_count() == 0 {
        return Ok(DenseFields::zeros(obs.mask.clone()));
    }
    gt_fields(obs, scene.target_joint())
}

/// Exact fields perturbed per point. Point `i` draws from its own ChaCha
/// stream, so results do not depend on evaluation order.
pub fn predict_noisy(scene: &ArticulatedScene, obs: &Observation, noise: &NoiseModel) -> Result<DenseFields> {
    let mut fields = predict_exact(scene, obs)?;
    if noise.is_zero() {
        return Ok(fields);
    }
    let tan_bias = noise.proj_bias_deg.to_radians().tan();
    for i in obs.masked_indices() {
        let mut rng = rng(noise.seed);
        rng.set_stream(i as u64);
        let angle_draw: f64 = rng.sample(StandardNormal);
        let axis_angle: f64 = rng.random_range(0.0..TAU);
        let scale_draw: f64 = rng.sample(StandardNormal);

        let mut f = fields.flow[i];
        let f_norm = f.norm();
        if noise.flow_sigma > 0.0 && f_norm > 0.0 {
            let (e1, e2) = perpendicular_basis(&(f / f_norm));
            let about = e1 * axis_angle.cos() + e2 * axis_angle.sin();
            let angle = (angle_draw * noise.flow_sigma).abs();
            f = rodrigues(&about, angle)?.apply(&f);
            fields.flow[i] = f;
        }

        let mut r = fields.projection[i];
        if noise.proj_sigma > 0.0 {
            r *= 1.0 + scale_draw * noise.proj_sigma;
        }
        if tan_bias > 0.0 && f_norm > 0.0 {
            r += f.normalize() * (r.norm() * tan_bias);
        }
        fields.projection[i] = r;
    }
    Ok(fields)
}

/// Fields read from a fields CSV; the row count must match `obs`.
pub fn predict_replay(path: &Path, obs: &Observation) -> Result<DenseFields> {
    let table = read_fields_csv(BufReader::new(File::open(path)?))?;
    if table.fields.len() != obs.len() {
        return Err(Error::LengthMismatch {
            expected: obs.len(),
            actual: table.fields.len(),
        });
    }
    Ok(table.fields)
}

/// Predictor selection for closed-loop rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    Exact,
    Noisy(NoiseModel),
}

impl Predictor {
    /// Prediction for the `call`-th observation of a rollout. Noisy
    /// predictions derive a fresh seed per call.
    pub fn predict(&self, scene: &ArticulatedScene, obs: &Observation, call: u64) -> Result<DenseFields> {
        match self {
            Predictor::Exact => predict_exact(scene, obs),
            Predictor::Noisy(noise) => {
                let seeded = noise.with_seed(derive_seed(noise.seed, "predict", call));
                predict_noisy(scene, obs, &seeded)
            }
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Predictor::Exact => Predictor::Exact,
            Predictor::Noisy(n) => Predictor::Noisy(n.with_seed(seed)),
        }
    }
}
