//! Training loop: AdamW with linear warmup, cosine decay and global
//! gradient-norm clipping.

use physdyn_core::losses::{total_loss_grad, LossBreakdown, LossGrid, LossWeights, PhysicsAux};
use physdyn_core::{PhysicsCondition, Rng, TrajectorySequence};
use serde::{Deserialize, Serialize};

use crate::network::{standardize_condition, Model};
use crate::tape::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Grid resolution used by the physics loss.
    pub loss_grid_res: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch_size: 1,
            learning_rate: 1e-4,
            warmup_steps: 100,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: 1.0,
            seed: 0,
            weights: LossWeights::default(),
            loss_grid_res: 48,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.grad_clip > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("grad_clip must be positive and weight_decay nonnegative".into()));
        }
        self.weights.validate()?;
        Ok(())
    }

    /// Learning rate at 0-based `step`: linear warmup then cosine decay to 0.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// One training trajectory and its condition.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub traj: TrajectorySequence,
    pub cond: PhysicsCondition,
}

/// Batch-mean losses of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub diff: f64,
    pub vel: f64,
    pub phys: f64,
    pub floor: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// AdamW moment buffers.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model.params.values.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, model: &mut Model, grads: &[Vec<f64>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (pi, p) in model.params.values.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[pi], &mut self.v[pi], &grads[pi]);
            for k in 0..p.data.len() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p.data[k] -= lr * (mhat / (vhat.sqrt() + cfg.adam_eps) + cfg.weight_decay * p.data[k]);
            }
        }
    }
}

/// Loss and parameter gradients for one noised training example.
pub fn example_gradient(
    model: &Model,
    item: &TrainItem,
    t: usize,
    eps: &[f64],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let schedule = model.config.schedule()?;
    let target = item.traj.to_array();
    let noisy = schedule.add_noise(&target, t, eps)?;
    let fwd = model.build(&noisy, t as f64, &standardize_condition(&item.cond), item.traj.initial())?;
    let out = fwd.graph.value(fwd.output);
    let pred = crate::network::to_traj(out, target.frames, target.points);
    let aux = match (&item.traj.def_grads, &item.traj.affines) {
        (Some(def_grads), Some(affines)) => Some(PhysicsAux { def_grads, affines, masses: None }),
        _ => None,
    };
    let lg = LossGrid { grid_res: cfg.loss_grid_res, frame_dt: item.traj.frame_dt };
    let (breakdown, grad) = total_loss_grad(&pred, &target, aux.as_ref(), &item.cond, &cfg.weights, &lg)?;
    let seed = Tensor::from_vec(out.rows, out.cols, grad.data);
    let grads = fwd.graph.backward(&[(fwd.output, seed)]);
    let param_grads = fwd
        .param_vars
        .iter()
        .zip(&model.params.values)
        .map(|(v, p)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.rows, p.cols)))
        .collect();
    Ok((breakdown, param_grads))
}

/// Trains `model` in place for `cfg.steps` steps. `on_step` sees every log
/// entry as it is produced.
pub fn train(
    model: &mut Model,
    data: &[TrainItem],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let schedule = model.config.schedule()?;
    let mut rng = Rng::new(cfg.seed);
    let mut opt = AdamW::new(model);
    let mut logs = Vec::with_capacity(cfg.steps);
    let inv_b = 1.0 / cfg.batch_size as f64;
    for step in 0..cfg.steps {
        let mut acc: Vec<Vec<f64>> = model.params.values.iter().map(|t| vec![0.0; t.data.len()]).collect();
        let mut sum = LossBreakdown::default();
        for _ in 0..cfg.batch_size {
            let item = &data[rng.index(data.len())];
            let t = 1 + rng.index(schedule.steps());
            let eps = rng.normals(item.traj.num_frames() * item.traj.num_points() * 3);
            let (b, grads) = example_gradient(model, item, t, &eps, cfg)?;
            if !b.total.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            sum.diff += b.diff * inv_b;
            sum.vel += b.vel * inv_b;
            sum.phys += b.phys * inv_b;
            sum.floor += b.floor * inv_b;
            sum.total += b.total * inv_b;
            for (a, g) in acc.iter_mut().zip(&grads) {
                for (x, y) in a.iter_mut().zip(&g.data) {
                    *x += y * inv_b;
                }
            }
        }
        let norm = acc.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        if norm > cfg.grad_clip {
            let s = cfg.grad_clip / norm;
            acc.iter_mut().flatten().for_each(|g| *g *= s);
        }
        let lr = cfg.lr_at(step);
        opt.step(model, &acc, lr, cfg);
        let log = StepLog {
            step,
            loss: sum.total,
            diff: sum.diff,
            vel: sum.vel,
            phys: sum.phys,
            floor: sum.floor,
            lr,
            grad_norm: norm,
        };
        on_step(&log);
        logs.push(log);
    }
    Ok(logs)
}
