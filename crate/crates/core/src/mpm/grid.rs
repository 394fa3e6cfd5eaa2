//! Background grid and the APIC particle/grid transfers.

use super::constitutive::{first_piola_stress, plastic_project, PlasticParams};
use super::kernel::Stencil;
use crate::{par, Error, Mat3, Material, Result, Vec3};

/// Per-particle state.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub x: Vec3,
    pub v: Vec3,
    /// Elastic deformation gradient.
    pub f: Mat3,
    /// APIC affine velocity matrix.
    pub c: Mat3,
    pub mass: f64,
    pub vol0: f64,
    /// Accumulated plastic volume change `det(F_plastic)`.
    pub plastic_j: f64,
}

impl Particle {
    pub fn at_rest(x: Vec3, mass: f64, vol0: f64) -> Self {
        Self {
            x,
            v: Vec3::zeros(),
            f: Mat3::identity(),
            c: Mat3::zeros(),
            mass,
            vol0,
            plastic_j: 1.0,
        }
    }
}

/// Material response used by the transfers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constitutive {
    pub material: Material,
    pub mu: f64,
    pub lambda: f64,
    pub plastic: PlasticParams,
}

/// Dense nodal grid over the unit cube with `res + 1` nodes per axis.
/// Only nodes touched by the last [`p2g`] are tracked as active.
#[derive(Debug, Clone)]
pub struct Grid {
    pub res: usize,
    pub dx: f64,
    pub mass: Vec<f64>,
    pub momentum: Vec<Vec3>,
    pub velocity: Vec<Vec3>,
    active: Vec<usize>,
    touched: Vec<bool>,
}

impl Grid {
    pub fn new(res: usize) -> Self {
        assert!(res >= 4, "grid resolution must be at least 4");
        let n = (res + 1).pow(3);
        Self {
            res,
            dx: 1.0 / res as f64,
            mass: vec![0.0; n],
            momentum: vec![Vec3::zeros(); n],
            velocity: vec![Vec3::zeros(); n],
            active: Vec::new(),
            touched: vec![false; n],
        }
    }

    pub fn inv_dx(&self) -> f64 {
        self.res as f64
    }

    #[inline]
    pub fn index(&self, node: [i64; 3]) -> usize {
        let m = self.res + 1;
        (node[0] as usize * m + node[1] as usize) * m + node[2] as usize
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let m = self.res + 1;
        [idx / (m * m), (idx / m) % m, idx % m]
    }

    pub fn position(&self, idx: usize) -> Vec3 {
        let c = self.coords(idx);
        Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.dx
    }

    /// Nodes that received mass in the last transfer, in first-touch order.
    pub fn active_nodes(&self) -> &[usize] {
        &self.active
    }

    pub fn clear(&mut self) {
        for &i in &self.active {
            self.mass[i] = 0.0;
            self.momentum[i] = Vec3::zeros();
            self.velocity[i] = Vec3::zeros();
            self.touched[i] = false;
        }
        self.active.clear();
    }

    pub fn total_mass(&self) -> f64 {
        self.active.iter().map(|&i| self.mass[i]).sum()
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.active.iter().map(|&i| self.momentum[i]).sum()
    }

    fn in_range(&self, st: &Stencil) -> bool {
        st.base()
            .iter()
            .all(|&b| b >= 0 && b + 2 <= self.res as i64)
    }
}

#[derive(Clone, Copy)]
struct Contribution {
    node: usize,
    mass: f64,
    momentum: Vec3,
}

const EMPTY: Contribution = Contribution {
    node: 0,
    mass: 0.0,
    momentum: Vec3::new(0.0, 0.0, 0.0),
};

/// Particle-to-grid transfer.
///
/// Scatters mass and APIC momentum `w m (v + C (x_i - x_p))`. With `stress`
/// the internal-force impulse `-dt V0 P(F) F^T grad w` is added, and with
/// `forces` the external impulse `w f dt`. Grid state is reset first.
///
/// Per-particle contributions are computed in parallel and accumulated in
/// particle order, so the result does not depend on the worker count.
pub fn p2g(
    particles: &[Particle],
    grid: &mut Grid,
    dt: f64,
    forces: Option<&[Vec3]>,
    stress: Option<&Constitutive>,
) -> Result<()> {
    grid.clear();
    let inv_dx = grid.inv_dx();
    if let Some(fs) = forces {
        if fs.len() != particles.len() {
            return Err(Error::ShapeMismatch("one external force per particle required".into()));
        }
    }
    let g: &Grid = grid;
    let contributions: Vec<Result<[Contribution; 27]>> = par::map_range(particles.len(), |p| {
        let part = &particles[p];
        let st = Stencil::new(&part.x, inv_dx);
        if !g.in_range(&st) || !part.x.iter().all(|c| c.is_finite()) {
            return Err(Error::OutOfDomain {
                particle: p,
                frame: 0,
                substep: 0,
            });
        }
        let affine_stress = match stress {
            Some(model) => {
                let piola = first_piola_stress(&part.f, model.mu, model.lambda, model.material)
                    .map_err(|e| match e {
                        Error::Inverted { det, .. } => Error::Inverted { particle: p, det },
                        other => other,
                    })?;
                -dt * part.vol0 * piola * part.f.transpose()
            }
            None => Mat3::zeros(),
        };
        let ext = forces.map_or(Vec3::zeros(), |fs| fs[p] * dt);
        let mut out = [EMPTY; 27];
        for (slot, nw) in out.iter_mut().zip(st.iter()) {
            let xi = Vec3::new(nw.node[0] as f64, nw.node[1] as f64, nw.node[2] as f64) / inv_dx;
            let wm = nw.w * part.mass;
            *slot = Contribution {
                node: g.index(nw.node),
                mass: wm,
                momentum: wm * (part.v + part.c * (xi - part.x)) + affine_stress * nw.grad + nw.w * ext,
            };
        }
        Ok(out)
    });
    for c in contributions {
        for k in c? {
            if !grid.touched[k.node] {
                grid.touched[k.node] = true;
                grid.active.push(k.node);
            }
            grid.mass[k.node] += k.mass;
            grid.momentum[k.node] += k.momentum;
        }
    }
    Ok(())
}

/// Ground plane at `height` along `y` with Coulomb friction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floor {
    pub height: f64,
    pub friction: f64,
}

/// Boundary handling for [`grid_update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub floor: Option<Floor>,
    /// Nodes within this many cells of a domain face get their outward
    /// velocity component removed. Zero disables the walls.
    pub wall_cells: usize,
}

/// Grid velocity update: momentum to velocity, gravity, then boundaries.
///
/// Nodes with mass below `1e-12` times the largest node mass are left at
/// zero velocity. A node below `floor + dx` moving downward loses its normal
/// velocity, and its tangential velocity is reduced by Coulomb friction.
pub fn grid_update(grid: &mut Grid, dt: f64, gravity: &Vec3, boundary: &Boundary) {
    let max_mass = grid.active.iter().map(|&i| grid.mass[i]).fold(0.0, f64::max);
    let mass_eps = 1e-12 * max_mass;
    let dx = grid.dx;
    let res = grid.res;
    for k in 0..grid.active.len() {
        let i = grid.active[k];
        let m = grid.mass[i];
        if m <= mass_eps {
            grid.velocity[i] = Vec3::zeros();
            continue;
        }
        let mut v = grid.momentum[i] / m + gravity * dt;
        let c = grid.coords(i);
        if let Some(floor) = boundary.floor {
            let y = c[1] as f64 * dx;
            if y < floor.height + dx && v.y < 0.0 {
                let vn = -v.y;
                v.y = 0.0;
                let vt = (v.x * v.x + v.z * v.z).sqrt();
                if vt > 0.0 {
                    let s = (1.0 - floor.friction * vn / vt).max(0.0);
                    v.x *= s;
                    v.z *= s;
                }
            }
        }
        let w = boundary.wall_cells;
        if w > 0 {
            for a in 0..3 {
                if c[a] < w && v[a] < 0.0 {
                    v[a] = 0.0;
                }
                if c[a] + w > res && v[a] > 0.0 {
                    v[a] = 0.0;
                }
            }
        }
        grid.velocity[i] = v;
    }
}

/// Grid-to-particle transfer: new velocity, affine matrix `C`, deformation
/// gradient (with plastic projection) and position.
pub fn g2p(particles: &mut [Particle], grid: &Grid, dt: f64, model: &Constitutive) -> Result<()> {
    let inv_dx = grid.inv_dx();
    let apic_scale = 4.0 * inv_dx * inv_dx;
    par::for_each_mut(particles, |_, part| {
        let st = Stencil::new(&part.x, inv_dx);
        let mut v = Vec3::zeros();
        let mut b = Mat3::zeros();
        let mut grad_v = Mat3::zeros();
        for nw in st.iter() {
            let idx = grid.index(nw.node);
            let vi = grid.velocity[idx];
            let xi = Vec3::new(nw.node[0] as f64, nw.node[1] as f64, nw.node[2] as f64) / inv_dx;
            v += nw.w * vi;
            b += nw.w * vi * (xi - part.x).transpose();
            grad_v += vi * nw.grad.transpose();
        }
        part.v = v;
        part.c = apic_scale * b;
        let trial = (Mat3::identity() + dt * grad_v) * part.f;
        let projected = plastic_project(&trial, model.material, &model.plastic, model.mu, model.lambda);
        if model.material != Material::Elastic && model.material != Material::Rigid {
            let (jt, jp) = (trial.determinant(), projected.determinant());
            if jp != 0.0 {
                part.plastic_j *= jt / jp;
            }
        }
        part.f = projected;
        part.x += dt * v;
    });
    if model.material == Material::Elastic {
        if let Some((p, part)) = particles.iter().enumerate().find(|(_, q)| !(q.f.determinant() > 0.0)) {
            return Err(Error::Inverted {
                particle: p,
                det: part.f.determinant(),
            });
        }
    }
    Ok(())
}
