//! Deterministic DDIM sampling with signal prediction.

use physdyn_core::{PhysicsCondition, Rng, TrajArray, TrajectorySequence, Vec3};

use crate::network::Model;
use crate::Result;

/// Samples `F` frames from pure noise in `steps` evenly spaced DDIM steps
/// (η = 0). The returned sequence starts with `p0`.
pub fn ddim_sample(
    model: &Model,
    cond: &PhysicsCondition,
    p0: &[Vec3],
    steps: usize,
    rng: &mut Rng,
    frame_dt: f64,
) -> Result<TrajectorySequence> {
    let cfg = &model.config;
    let schedule = cfg.schedule()?;
    let (f, n) = (cfg.num_frames, cfg.num_points);
    let mut x = TrajArray::from_vec(f, n, rng.normals(f * n * 3))?;
    let ts = schedule.sub_schedule(steps);
    for k in (1..ts.len()).rev() {
        let (t, t_prev) = (ts[k], ts[k - 1]);
        let x0 = model.denoise(&x, t as f64, cond, p0)?;
        let (a, s) = (schedule.alpha(t), schedule.sigma(t));
        let (ap, sp) = (schedule.alpha(t_prev), schedule.sigma(t_prev));
        for (xi, x0i) in x.data.iter_mut().zip(&x0.data) {
            let eps = if s > 0.0 { (*xi - a * x0i) / s } else { 0.0 };
            *xi = ap * x0i + sp * eps;
        }
        if t_prev == 0 {
            x = x0;
        }
    }
    let mut frames = Vec::with_capacity(f + 1);
    frames.push(p0.to_vec());
    frames.extend(x.to_frames());
    Ok(TrajectorySequence { frames, def_grads: None, affines: None, frame_dt })
}
