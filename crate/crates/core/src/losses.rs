//! Training losses on predicted trajectories, with analytic gradients with
//! respect to the prediction.
//!
//! Trajectory arrays hold frames `1..=F` (the initial frame is not part of a
//! prediction). Frame numbers in this module are 1-based to match that.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mpm::Stencil;
use crate::{par, Error, Mat3, Material, PhysicsCondition, Result, TrajArray, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub vel: f64,
    pub phys: f64,
    pub floor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { vel: 1.0, phys: 0.1, floor: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("vel", self.vel), ("phys", self.phys), ("floor", self.floor)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("loss weight {name} = {w} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

/// Background grid used to approximate node velocities from predicted points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossGrid {
    pub grid_res: usize,
    /// Seconds between consecutive frames.
    pub frame_dt: f64,
}

impl Default for LossGrid {
    fn default() -> Self {
        Self { grid_res: 48, frame_dt: 1.0 / 24.0 }
    }
}

impl LossGrid {
    pub fn inv_dx(&self) -> f64 {
        self.grid_res as f64
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.grid_res as f64
    }

    fn validate(&self) -> Result<()> {
        if self.grid_res < 2 || !(self.frame_dt > 0.0) {
            return Err(Error::invalid("loss grid needs grid_res >= 2 and frame_dt > 0"));
        }
        Ok(())
    }
}

/// Ground-truth per-particle quantities needed by the physics loss, for
/// frames `1..=F`.
#[derive(Debug, Clone, Copy)]
pub struct PhysicsAux<'a> {
    pub def_grads: &'a [Vec<Mat3>],
    pub affines: &'a [Vec<Mat3>],
    /// Particle masses. `None` means equal masses (they cancel in the grid
    /// velocity average).
    pub masses: Option<&'a [f64]>,
}

fn check_shapes(pred: &TrajArray, target: &TrajArray) -> Result<()> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch(format!(
            "pred {}x{} vs target {}x{}",
            pred.frames, pred.points, target.frames, target.points
        )));
    }
    Ok(())
}

/// Mean squared error over all entries.
pub fn diffusion_loss(pred: &TrajArray, target: &TrajArray) -> Result<f64> {
    check_shapes(pred, target)?;
    let n = pred.data.len().max(1) as f64;
    Ok(pred.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

pub fn diffusion_loss_grad(pred: &TrajArray, target: &TrajArray) -> Result<(f64, TrajArray)> {
    let loss = diffusion_loss(pred, target)?;
    let n = pred.data.len().max(1) as f64;
    let data = pred.data.iter().zip(&target.data).map(|(a, b)| 2.0 * (a - b) / n).collect();
    Ok((loss, TrajArray { frames: pred.frames, points: pred.points, data }))
}

fn frame_stride(a: &TrajArray) -> usize {
    a.points * 3
}

fn check_velocity(pred: &TrajArray, target: &TrajArray) -> Result<()> {
    check_shapes(pred, target)?;
    if pred.frames < 2 {
        return Err(Error::invalid(format!("velocity loss needs at least 2 frames, got {}", pred.frames)));
    }
    Ok(())
}

/// Mean squared mismatch of frame-to-frame displacements.
pub fn velocity_loss(pred: &TrajArray, target: &TrajArray) -> Result<f64> {
    velocity_loss_grad(pred, target).map(|(l, _)| l)
}

pub fn velocity_loss_grad(pred: &TrajArray, target: &TrajArray) -> Result<(f64, TrajArray)> {
    check_velocity(pred, target)?;
    let s = frame_stride(pred);
    let count = ((pred.frames - 1) * s).max(1) as f64;
    let mut grad = TrajArray::zeros(pred.frames, pred.points);
    let mut loss = 0.0;
    for f in 0..pred.frames - 1 {
        for k in 0..s {
            let i0 = f * s + k;
            let i1 = i0 + s;
            let r = (target.data[i1] - target.data[i0]) - (pred.data[i1] - pred.data[i0]);
            loss += r * r;
            let g = 2.0 * r / count;
            grad.data[i1] -= g;
            grad.data[i0] += g;
        }
    }
    Ok((loss / count, grad))
}

/// Squared penetration of the vertical coordinate below `h`, summed over
/// frames and averaged over points.
pub fn floor_loss(pred: &TrajArray, h: f64) -> f64 {
    floor_loss_grad(pred, h).0
}

pub fn floor_loss_grad(pred: &TrajArray, h: f64) -> (f64, TrajArray) {
    let n = pred.points.max(1) as f64;
    let mut grad = TrajArray::zeros(pred.frames, pred.points);
    let mut loss = 0.0;
    for (i, y) in pred.data.iter().enumerate().skip(1).step_by(3) {
        let d = h - y;
        if d > 0.0 {
            loss += d * d;
            grad.data[i] = -2.0 * d / n;
        }
    }
    (loss / n, grad)
}

/// Node velocities approximated from predicted positions at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVelocities {
    pub nodes: Vec<[i64; 3]>,
    pub mass: Vec<f64>,
    pub velocity: Vec<Vec3>,
}

impl NodeVelocities {
    pub fn get(&self, node: [i64; 3]) -> Option<Vec3> {
        self.nodes.iter().position(|n| *n == node).map(|i| self.velocity[i])
    }
}

/// Sparse grid touched by one frame's particles. Node order is first-touch
/// order over particles, so accumulation is deterministic.
struct FrameGrid {
    nodes: Vec<[i64; 3]>,
    /// For particle `p`, the 27 node slots of its stencil.
    slots: Vec<[u32; 27]>,
    stencils: Vec<Stencil>,
}

impl FrameGrid {
    fn build(x: &[Vec3], inv_dx: f64) -> Self {
        let mut lookup: HashMap<[i64; 3], u32> = HashMap::with_capacity(x.len() * 8);
        let mut nodes = Vec::new();
        let mut slots = Vec::with_capacity(x.len());
        let mut stencils = Vec::with_capacity(x.len());
        for p in x {
            let st = Stencil::new(p, inv_dx);
            let mut s = [0u32; 27];
            for (n, nw) in st.iter().enumerate() {
                s[n] = *lookup.entry(nw.node).or_insert_with(|| {
                    nodes.push(nw.node);
                    (nodes.len() - 1) as u32
                });
            }
            slots.push(s);
            stencils.push(st);
        }
        Self { nodes, slots, stencils }
    }

    fn node_pos(&self, slot: u32, dx: f64) -> Vec3 {
        let n = self.nodes[slot as usize];
        Vec3::new(n[0] as f64, n[1] as f64, n[2] as f64) * dx
    }
}

struct FrameTransfer {
    grid: FrameGrid,
    mass: Vec<f64>,
    velocity: Vec<Vec3>,
}

fn transfer(x: &[Vec3], u: &[Vec3], affines: &[Mat3], masses: Option<&[f64]>, lg: &LossGrid) -> FrameTransfer {
    let dx = lg.dx();
    let grid = FrameGrid::build(x, lg.inv_dx());
    let nn = grid.nodes.len();
    let mut mass = vec![0.0; nn];
    let mut momentum = vec![Vec3::zeros(); nn];
    for p in 0..x.len() {
        let mp = masses.map_or(1.0, |m| m[p]);
        for (n, nw) in grid.stencils[p].iter().enumerate() {
            let slot = grid.slots[p][n];
            let xi = grid.node_pos(slot, dx);
            let wm = nw.w * mp;
            mass[slot as usize] += wm;
            momentum[slot as usize] += (u[p] + affines[p] * (xi - x[p])) * wm;
        }
    }
    let eps = 1e-12 * mass.iter().cloned().fold(0.0, f64::max);
    let velocity = mass
        .iter()
        .zip(&momentum)
        .map(|(m, q)| if *m > eps { q / *m } else { Vec3::zeros() })
        .collect();
    FrameTransfer { grid, mass, velocity }
}

fn central_velocity(pred: &TrajArray, f: usize, dt: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    let x = pred.frame(f - 1);
    let x2 = pred.frame(f + 1);
    let u = x.iter().zip(&x2).map(|(a, b)| (b - a) / (2.0 * dt)).collect();
    (x, u)
}

fn check_physics(pred: &TrajArray, aux: &PhysicsAux, lg: &LossGrid) -> Result<()> {
    lg.validate()?;
    if pred.frames < 3 {
        return Err(Error::invalid(format!("physics loss needs at least 3 frames, got {}", pred.frames)));
    }
    let ok = aux.def_grads.len() == pred.frames
        && aux.affines.len() == pred.frames
        && aux.def_grads.iter().chain(aux.affines).all(|v| v.len() == pred.points)
        && aux.masses.map_or(true, |m| m.len() == pred.points);
    if !ok {
        return Err(Error::ShapeMismatch(format!(
            "physics aux does not match {} frames x {} points",
            pred.frames, pred.points
        )));
    }
    Ok(())
}

/// Node velocities at frame `f + 1` from one particle-to-grid transfer of the
/// predicted points at frame `f`, using central-difference point velocities
/// and the given affine matrices. `f` is 1-based and must be at most `F - 2`.
pub fn grid_velocity_approx(pred: &TrajArray, affines: &[Vec<Mat3>], masses: Option<&[f64]>, lg: &LossGrid, f: usize) -> Result<NodeVelocities> {
    lg.validate()?;
    if f == 0 || f + 2 > pred.frames {
        return Err(Error::invalid(format!("frame {f} needs frames f..f+2 within 1..={}", pred.frames)));
    }
    if affines.len() < f || affines[f - 1].len() != pred.points {
        return Err(Error::ShapeMismatch("affine matrices do not match prediction".into()));
    }
    let (x, u) = central_velocity(pred, f, lg.frame_dt);
    let t = transfer(&x, &u, &affines[f - 1], masses, lg);
    Ok(NodeVelocities { nodes: t.grid.nodes, mass: t.mass, velocity: t.velocity })
}

/// Per-frame physics residual sum and, optionally, its gradient with respect
/// to the predicted positions of frames `f` and `f + 2`.
fn physics_frame(pred: &TrajArray, aux: &PhysicsAux, lg: &LossGrid, f: usize, scale: f64, want_grad: bool) -> (f64, Vec<Vec3>, Vec<Vec3>) {
    let dt = lg.frame_dt;
    let dx = lg.dx();
    let (x, u) = central_velocity(pred, f, dt);
    let c = &aux.affines[f - 1];
    let fa = &aux.def_grads[f - 1];
    let fb = &aux.def_grads[f];
    let t = transfer(&x, &u, c, aux.masses, lg);
    let np = x.len();
    let nn = t.grid.nodes.len();

    let mut total = 0.0;
    let mut g_a = vec![Mat3::zeros(); if want_grad { np } else { 0 }];
    for p in 0..np {
        let st = &t.grid.stencils[p];
        let mut a = Mat3::zeros();
        for (n, nw) in st.iter().enumerate() {
            a += t.velocity[t.grid.slots[p][n] as usize] * nw.grad.transpose();
        }
        let g = Mat3::identity() + a * dt;
        let r = fb[p] - g * fa[p];
        let s = r.norm();
        total += s;
        if want_grad && s > 0.0 {
            g_a[p] = -(r / s) * fa[p].transpose() * (dt * scale);
        }
    }
    if !want_grad {
        return (total, Vec::new(), Vec::new());
    }

    let mut gx = vec![Vec3::zeros(); np];
    let mut gv = vec![Vec3::zeros(); nn];
    for p in 0..np {
        let st = &t.grid.stencils[p];
        for (n, nw) in st.iter().enumerate() {
            let slot = t.grid.slots[p][n] as usize;
            gv[slot] += g_a[p] * nw.grad;
            let h = st.hessian(n);
            gx[p] += h * (g_a[p].transpose() * t.velocity[slot]);
        }
    }
    let eps = 1e-12 * t.mass.iter().cloned().fold(0.0, f64::max);
    let mut gq = vec![Vec3::zeros(); nn];
    let mut gm = vec![0.0; nn];
    for i in 0..nn {
        if t.mass[i] > eps {
            gq[i] = gv[i] / t.mass[i];
            gm[i] = -gv[i].dot(&t.velocity[i]) / t.mass[i];
        }
    }
    let mut gu = vec![Vec3::zeros(); np];
    for p in 0..np {
        let mp = aux.masses.map_or(1.0, |m| m[p]);
        let st = &t.grid.stencils[p];
        for (n, nw) in st.iter().enumerate() {
            let slot = t.grid.slots[p][n];
            let i = slot as usize;
            let xi = t.grid.node_pos(slot, dx);
            let val = u[p] + c[p] * (xi - x[p]);
            gu[p] += gq[i] * (nw.w * mp);
            gx[p] += nw.grad * (mp * (gq[i].dot(&val) + gm[i]));
            gx[p] -= c[p].transpose() * gq[i] * (nw.w * mp);
        }
    }
    let mut g_first = gx;
    let mut g_last = vec![Vec3::zeros(); np];
    for p in 0..np {
        let d = gu[p] / (2.0 * dt);
        g_first[p] -= d;
        g_last[p] += d;
    }
    (total, g_first, g_last)
}

/// Mean Frobenius residual of the ground-truth deformation-gradient update
/// evaluated with velocities approximated from the predicted points.
pub fn physics_loss(pred: &TrajArray, aux: &PhysicsAux, lg: &LossGrid) -> Result<f64> {
    check_physics(pred, aux, lg)?;
    let frames = pred.frames - 2;
    let sums = par::map_range(frames, |k| physics_frame(pred, aux, lg, k + 1, 0.0, false).0);
    Ok(sums.iter().sum::<f64>() / (pred.points.max(1) * frames) as f64)
}

pub fn physics_loss_grad(pred: &TrajArray, aux: &PhysicsAux, lg: &LossGrid) -> Result<(f64, TrajArray)> {
    check_physics(pred, aux, lg)?;
    let frames = pred.frames - 2;
    let scale = 1.0 / (pred.points.max(1) * frames) as f64;
    let parts = par::map_range(frames, |k| physics_frame(pred, aux, lg, k + 1, scale, true));
    let mut grad = TrajArray::zeros(pred.frames, pred.points);
    let mut loss = 0.0;
    for (k, (s, g_first, g_last)) in parts.into_iter().enumerate() {
        loss += s;
        for p in 0..pred.points {
            for (frame, g) in [(k, g_first[p]), (k + 2, g_last[p])] {
                let o = grad.offset(frame, p);
                for d in 0..3 {
                    grad.data[o + d] += g[d];
                }
            }
        }
    }
    Ok((loss * scale, grad))
}

/// Value of each term plus the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub diff: f64,
    pub vel: f64,
    pub phys: f64,
    pub floor: f64,
    pub total: f64,
}

fn total_impl(
    pred: &TrajArray,
    target: &TrajArray,
    aux: Option<&PhysicsAux>,
    cond: &PhysicsCondition,
    weights: &LossWeights,
    lg: &LossGrid,
) -> Result<(LossBreakdown, TrajArray)> {
    weights.validate()?;
    let (diff, mut grad) = diffusion_loss_grad(pred, target)?;
    let mut out = LossBreakdown { diff, ..Default::default() };
    let mut add = |g: &TrajArray, w: f64| {
        for (a, b) in grad.data.iter_mut().zip(&g.data) {
            *a += w * b;
        }
    };
    if weights.vel > 0.0 && pred.frames >= 2 {
        let (l, g) = velocity_loss_grad(pred, target)?;
        out.vel = l;
        add(&g, weights.vel);
    }
    if weights.phys > 0.0 && cond.material != Material::Rigid {
        let aux = aux.ok_or_else(|| Error::invalid("physics loss needs ground-truth deformation gradients and affine matrices"))?;
        let (l, g) = physics_loss_grad(pred, aux, lg)?;
        out.phys = l;
        add(&g, weights.phys);
    }
    if weights.floor > 0.0 {
        let (l, g) = floor_loss_grad(pred, cond.floor_height);
        out.floor = l;
        add(&g, weights.floor);
    }
    out.total = out.diff + weights.vel * out.vel + weights.phys * out.phys + weights.floor * out.floor;
    Ok((out, grad))
}

/// Weighted training loss. The physics term is skipped for rigid objects.
pub fn total_loss(
    pred: &TrajArray,
    target: &TrajArray,
    aux: Option<&PhysicsAux>,
    cond: &PhysicsCondition,
    weights: &LossWeights,
    lg: &LossGrid,
) -> Result<LossBreakdown> {
    total_impl(pred, target, aux, cond, weights, lg).map(|(b, _)| b)
}

/// [`total_loss`] together with the gradient of the total.
pub fn total_loss_grad(
    pred: &TrajArray,
    target: &TrajArray,
    aux: Option<&PhysicsAux>,
    cond: &PhysicsCondition,
    weights: &LossWeights,
    lg: &LossGrid,
) -> Result<(LossBreakdown, TrajArray)> {
    total_impl(pred, target, aux, cond, weights, lg)
}
