//! Physics-parameter estimation by minimizing the denoising energy of a
//! frozen model over the condition.

use physdyn_core::{par, PhysicsCondition, Rng, TrajArray, TrajectorySequence, Vec3};
use serde::{Deserialize, Serialize};

use crate::network::{standardize_condition, Model, COND_INPUT_DIM, FORCE_SCALE, LOG10_E_RANGE, POISSON_RANGE};
use crate::tape::Tensor;
use crate::{Error, Result};

/// What the denoiser output is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyTarget {
    /// The observed clean trajectory.
    #[default]
    Clean,
    /// The noised trajectory fed to the denoiser.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyConfig {
    pub num_t_samples: usize,
    pub seed: u64,
    pub target: EnergyTarget,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { num_t_samples: 32, seed: 0, target: EnergyTarget::Clean }
    }
}

/// A fixed set of `(t, ε)` draws shared by every evaluated condition.
#[derive(Debug, Clone)]
pub struct Draws {
    items: Vec<(usize, Vec<f64>)>,
    target: EnergyTarget,
}

impl Draws {
    pub fn new(model: &Model, cfg: &EnergyConfig) -> Result<Self> {
        if cfg.num_t_samples == 0 {
            return Err(Error::Config("num_t_samples must be positive".into()));
        }
        let steps = model.config.diffusion_steps;
        let len = model.config.num_frames * model.config.num_points * 3;
        let mut rng = Rng::new(cfg.seed);
        let items = (0..cfg.num_t_samples)
            .map(|_| {
                let t = 1 + rng.index(steps);
                (t, rng.normals(len))
            })
            .collect();
        Ok(Self { items, target: cfg.target })
    }
}

fn check_traj(model: &Model, traj: &TrajectorySequence) -> Result<()> {
    traj.validate()?;
    if traj.num_frames() != model.config.num_frames || traj.num_points() != model.config.num_points {
        return Err(Error::Shape(format!(
            "trajectory is {}x{}, model expects {}x{}",
            traj.num_frames(),
            traj.num_points(),
            model.config.num_frames,
            model.config.num_points
        )));
    }
    Ok(())
}

/// Energy and its gradient with respect to the standardized condition.
fn energy_grad(
    model: &Model,
    traj: &TrajectorySequence,
    draws: &Draws,
    cond_vec: &[f64; COND_INPUT_DIM],
    want_grad: bool,
) -> Result<(f64, [f64; COND_INPUT_DIM])> {
    let schedule = model.config.schedule()?;
    let clean = traj.to_array();
    let m = clean.data.len() as f64;
    let k = draws.items.len() as f64;
    let mut total = 0.0;
    let mut grad = [0.0; COND_INPUT_DIM];
    for (t, eps) in &draws.items {
        let noisy = schedule.add_noise(&clean, *t, eps)?;
        let target: &TrajArray = match draws.target {
            EnergyTarget::Clean => &clean,
            EnergyTarget::Noisy => &noisy,
        };
        let fwd = model.build(&noisy, *t as f64, cond_vec, traj.initial())?;
        let out = fwd.graph.value(fwd.output);
        let mut seed = Vec::with_capacity(out.data.len());
        let mut e = 0.0;
        for (p, q) in out.data.iter().zip(&target.data) {
            e += (p - q) * (p - q);
            seed.push(2.0 * (p - q) / (m * k));
        }
        total += e / (m * k);
        if want_grad {
            let grads = fwd.graph.backward(&[(fwd.output, Tensor::from_vec(out.rows, out.cols, seed))]);
            if let Some(g) = grads.get(fwd.cond_input) {
                for (a, b) in grad.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
        }
    }
    Ok((total, grad))
}

/// Monte-Carlo denoising energy of `traj` under `cond`: the mean over the
/// configured `(t, ε)` draws of the per-entry squared error between the
/// denoiser output and the target.
pub fn energy(model: &Model, traj: &TrajectorySequence, cond: &PhysicsCondition, cfg: &EnergyConfig) -> Result<f64> {
    check_traj(model, traj)?;
    let draws = Draws::new(model, cfg)?;
    Ok(energy_grad(model, traj, &draws, &standardize_condition(cond), false)?.0)
}

/// Energies of `base` with log10(E) replaced by each value, all using the
/// same draws.
pub fn energy_grid(
    model: &Model,
    traj: &TrajectorySequence,
    base: &PhysicsCondition,
    log10_e: &[f64],
    cfg: &EnergyConfig,
) -> Result<Vec<f64>> {
    check_traj(model, traj)?;
    let draws = Draws::new(model, cfg)?;
    par::map_slice(log10_e, |v| {
        let mut c = base.clone();
        c.youngs_modulus = 10f64.powf(*v);
        energy_grad(model, traj, &draws, &standardize_condition(&c), false).map(|r| r.0)
    })
    .into_iter()
    .collect()
}

/// Which condition entries the optimizer may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeParams {
    pub log10_e: bool,
    pub poisson: bool,
    pub force: bool,
    pub floor: bool,
}

impl FreeParams {
    pub fn any(&self) -> bool {
        self.log10_e || self.poisson || self.force || self.floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Consecutive energy increases that count as divergence.
    pub patience: usize,
    pub energy: EnergyConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, iterations: 200, patience: 10, energy: EnergyConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub cond: PhysicsCondition,
    pub energy: f64,
    /// Energy at every evaluated iterate, starting with the initial one.
    pub energy_trace: Vec<f64>,
    pub diverged: bool,
}

/// Unconstrained optimization variables:
/// `[log10 E, logit ν', fx, fy, fz, h]` where `ν = lo + (hi - lo) σ(ν')`.
const NUM_VARS: usize = 6;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn to_vars(c: &PhysicsCondition) -> [f64; NUM_VARS] {
    let (lo, hi) = POISSON_RANGE;
    let u = ((c.poisson_ratio - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
    [c.youngs_modulus.log10(), (u / (1.0 - u)).ln(), c.force.x, c.force.y, c.force.z, c.floor_height]
}

fn from_vars(base: &PhysicsCondition, z: &[f64; NUM_VARS]) -> PhysicsCondition {
    let (lo, hi) = POISSON_RANGE;
    PhysicsCondition {
        youngs_modulus: 10f64.powf(z[0]),
        poisson_ratio: lo + (hi - lo) * sigmoid(z[1]),
        force: Vec3::new(z[2], z[3], z[4]),
        floor_height: z[5].clamp(0.0, 1.0),
        ..base.clone()
    }
}

/// d(standardized condition)/d(vars), applied to an upstream gradient.
fn chain(z: &[f64; NUM_VARS], g: &[f64; COND_INPUT_DIM]) -> [f64; NUM_VARS] {
    let (elo, ehi) = LOG10_E_RANGE;
    let s = sigmoid(z[1]);
    let floor_slope = if (0.0..=1.0).contains(&z[5]) { 2.0 } else { 0.0 };
    [
        g[6] * 2.0 / (ehi - elo),
        g[7] * 2.0 * s * (1.0 - s),
        g[0] / FORCE_SCALE,
        g[1] / FORCE_SCALE,
        g[2] / FORCE_SCALE,
        g[8] * floor_slope,
    ]
}

/// Adam on the free entries of the condition through the frozen model.
/// Returns the lowest-energy condition seen.
pub fn estimate_params(
    model: &Model,
    traj: &TrajectorySequence,
    init: &PhysicsCondition,
    free: FreeParams,
    cfg: &EstimateConfig,
) -> Result<Estimate> {
    check_traj(model, traj)?;
    let draws = Draws::new(model, &cfg.energy)?;
    let mask = [free.log10_e, free.poisson, free.force, free.force, free.force, free.floor];
    let mut z = to_vars(init);
    let (e0, mut grad) = energy_grad(model, traj, &draws, &standardize_condition(init), free.any())?;
    let mut trace = vec![e0];
    let mut best = (e0, init.clone());
    if !free.any() {
        return Ok(Estimate { cond: init.clone(), energy: e0, energy_trace: trace, diverged: false });
    }
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = [0.0; NUM_VARS];
    let mut v = [0.0; NUM_VARS];
    let mut increases = 0;
    let mut diverged = false;
    for it in 1..=cfg.iterations {
        let gz = chain(&z, &grad);
        for k in 0..NUM_VARS {
            if !mask[k] {
                continue;
            }
            m[k] = b1 * m[k] + (1.0 - b1) * gz[k];
            v[k] = b2 * v[k] + (1.0 - b2) * gz[k] * gz[k];
            let mhat = m[k] / (1.0 - b1.powi(it as i32));
            let vhat = v[k] / (1.0 - b2.powi(it as i32));
            z[k] -= cfg.learning_rate * mhat / (vhat.sqrt() + eps);
        }
        let cond = from_vars(init, &z);
        let (e, g) = energy_grad(model, traj, &draws, &standardize_condition(&cond), true)?;
        grad = g;
        increases = if e > *trace.last().unwrap() { increases + 1 } else { 0 };
        trace.push(e);
        if e < best.0 {
            best = (e, cond);
        }
        if increases >= cfg.patience {
            log::warn!("energy increased {increases} times in a row at iteration {it}; stopping");
            diverged = true;
            break;
        }
    }
    Ok(Estimate { cond: best.1, energy: best.0, energy_trace: trace, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ModelConfig;
    use physdyn_core::Material;

    fn setup() -> (Model, TrajectorySequence, PhysicsCondition) {
        let cfg = ModelConfig {
            num_layers: 1,
            latent_dim: 8,
            num_heads: 2,
            cond_token_dim: 8,
            mlp_ratio: 2,
            num_points: 4,
            num_frames: 3,
            diffusion_steps: 100,
        };
        let model = Model::new(cfg, 3).unwrap();
        let mut rng = Rng::new(5);
        let frames = (0..4)
            .map(|_| (0..4).map(|_| Vec3::new(rng.uniform(), rng.uniform(), rng.uniform())).collect())
            .collect();
        let traj = TrajectorySequence { frames, def_grads: None, affines: None, frame_dt: 0.04 };
        let cond = PhysicsCondition {
            force: Vec3::new(0.05, 0.0, 0.0),
            drag_point: Vec3::new(0.5, 0.5, 0.5),
            youngs_modulus: 1e5,
            poisson_ratio: 0.3,
            floor_height: 0.1,
            material: Material::Elastic,
        };
        (model, traj, cond)
    }

    #[test]
    fn energy_is_nonnegative_and_paired() {
        let (m, t, c) = setup();
        let cfg = EnergyConfig { num_t_samples: 4, seed: 1, target: EnergyTarget::Clean };
        let a = energy(&m, &t, &c, &cfg).unwrap();
        assert!(a >= 0.0);
        assert_eq!(a, energy(&m, &t, &c, &cfg).unwrap());
        let noisy = energy(&m, &t, &c, &EnergyConfig { target: EnergyTarget::Noisy, ..cfg.clone() }).unwrap();
        assert!(noisy >= 0.0 && noisy != a);
        let grid = energy_grid(&m, &t, &c, &[5.0, 4.0], &cfg).unwrap();
        assert_eq!(grid[0], a);
        assert!(grid[1] != a);
    }

    #[test]
    fn frozen_parameters_return_initial_condition() {
        let (m, t, c) = setup();
        let cfg = EstimateConfig { energy: EnergyConfig { num_t_samples: 2, ..Default::default() }, ..Default::default() };
        let est = estimate_params(&m, &t, &c, FreeParams::default(), &cfg).unwrap();
        assert_eq!(est.cond, c);
        assert_eq!(est.energy_trace.len(), 1);
        assert!(!est.diverged);
    }

    #[test]
    fn variable_mapping_round_trips() {
        let (_, _, c) = setup();
        let back = from_vars(&c, &to_vars(&c));
        assert!((back.youngs_modulus / c.youngs_modulus - 1.0).abs() < 1e-12);
        assert!((back.poisson_ratio - c.poisson_ratio).abs() < 1e-12);
        assert_eq!(back.force, c.force);
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let (m, t, c) = setup();
        let draws = Draws::new(&m, &EnergyConfig { num_t_samples: 2, ..Default::default() }).unwrap();
        let z = to_vars(&c);
        let f = |z: &[f64; NUM_VARS]| energy_grad(&m, &t, &draws, &standardize_condition(&from_vars(&c, z)), false).unwrap().0;
        let (_, g) = energy_grad(&m, &t, &draws, &standardize_condition(&c), true).unwrap();
        let an = chain(&z, &g);
        for k in 0..NUM_VARS {
            let (mut p, mut q) = (z, z);
            p[k] += 1e-6;
            q[k] -= 1e-6;
            let fd = (f(&p) - f(&q)) / 2e-6;
            assert!((fd - an[k]).abs() < 1e-5 * (1.0 + fd.abs()), "var {k}: fd {fd} analytic {}", an[k]);
        }
    }

    #[test]
    fn optimization_does_not_increase_best_energy() {
        let (m, t, c) = setup();
        let cfg = EstimateConfig { iterations: 15, energy: EnergyConfig { num_t_samples: 2, ..Default::default() }, ..Default::default() };
        let free = FreeParams { log10_e: true, poisson: true, force: true, floor: true };
        let est = estimate_params(&m, &t, &c, free, &cfg).unwrap();
        assert!(est.energy <= est.energy_trace[0]);
        assert!(est.energy_trace.len() >= 2);
        assert_eq!(est.cond.material, c.material);
        assert_eq!(est.cond.drag_point, c.drag_point);
    }
}
