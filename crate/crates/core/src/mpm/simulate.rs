use serde::{Deserialize, Serialize};

use super::constitutive::{lame_params, PlasticParams};
use super::grid::{g2p, grid_update, p2g, Boundary, Constitutive, Floor, Grid, Particle};
use crate::{Error, Mat3, Material, PhysicsCondition, PointCloud, Result, TrajectorySequence, Vec3, REFERENCE_GRAVITY};

/// Simulator settings. Time is in seconds and lengths in normalized domain
/// units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Grid cells per axis; node spacing is `1 / grid_res`.
    pub grid_res: usize,
    /// Seconds per recorded frame.
    pub frame_dt: f64,
    /// Substeps per frame. `None` derives the smallest count that satisfies
    /// the stability bound.
    pub substeps_per_frame: Option<usize>,
    /// Fraction of the stability bound used when deriving substeps.
    pub cfl: f64,
    pub gravity: [f64; 3],
    /// Coulomb friction coefficient of the floor.
    pub floor_friction: f64,
    pub density: f64,
    pub margin: f64,
    /// Particles within this distance of the drag point share the force.
    pub force_region_radius: f64,
    /// Fraction of the clip (from the start) during which the drag force acts.
    pub force_active_fraction: f64,
    pub wall_cells: usize,
    pub plastic: PlasticParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid_res: 48,
            frame_dt: 1.0 / 24.0,
            substeps_per_frame: None,
            cfl: 0.5,
            gravity: [0.0, -REFERENCE_GRAVITY, 0.0],
            floor_friction: 0.4,
            density: 1000.0,
            margin: 0.1,
            force_region_radius: 0.1,
            force_active_fraction: 1.0,
            wall_cells: 2,
            plastic: PlasticParams::default(),
        }
    }
}

impl SimConfig {
    pub fn dx(&self) -> f64 {
        1.0 / self.grid_res as f64
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    /// Upper bound on the substep: `cfl * dx / c` with `c` the dilatational
    /// wave speed `sqrt((lambda + 2 mu) / rho)`.
    pub fn stable_dt(&self, youngs: f64, poisson: f64) -> Result<f64> {
        let (mu, lambda) = lame_params(youngs, poisson)?;
        let c = ((lambda + 2.0 * mu) / self.density).sqrt();
        Ok(self.cfl * self.dx() / c)
    }

    /// Substep count for the given material parameters.
    pub fn substeps(&self, youngs: f64, poisson: f64) -> Result<usize> {
        match self.substeps_per_frame {
            Some(n) if n > 0 => Ok(n),
            Some(_) => Err(Error::invalid("substeps_per_frame must be positive")),
            None => {
                let bound = self.stable_dt(youngs, poisson)?;
                Ok((self.frame_dt / bound).ceil().max(1.0) as usize)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_res < 8 {
            return Err(Error::invalid("grid_res must be at least 8"));
        }
        if !(self.frame_dt > 0.0) || !(self.density > 0.0) {
            return Err(Error::invalid("frame_dt and density must be positive"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::invalid("cfl must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Total object volume estimated as the number of grid cells containing at
/// least one point, times the cell volume.
pub fn estimate_volume(points: &[Vec3], dx: f64) -> f64 {
    let mut cells: Vec<[i64; 3]> = points
        .iter()
        .map(|p| [(p.x / dx).floor() as i64, (p.y / dx).floor() as i64, (p.z / dx).floor() as i64])
        .collect();
    cells.sort_unstable();
    cells.dedup();
    cells.len() as f64 * dx * dx * dx
}

/// Total mass of an object under `cfg`.
pub fn object_mass(points: &[Vec3], cfg: &SimConfig) -> f64 {
    cfg.density * estimate_volume(points, cfg.dx())
}

/// Indices of points sharing the drag force: those within `radius` of the
/// drag point, or the single nearest point if none are.
pub fn force_region(points: &[Vec3], drag_point: &Vec3, radius: f64) -> Vec<usize> {
    let inside: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - drag_point).norm() <= radius)
        .map(|(i, _)| i)
        .collect();
    if !inside.is_empty() {
        return inside;
    }
    let nearest = points
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - drag_point).norm_squared().total_cmp(&(b.1 - drag_point).norm_squared()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    vec![nearest]
}

/// Check that the drag point is one of the object's points.
pub(crate) fn check_drag_point(points: &[Vec3], drag_point: &Vec3) -> Result<()> {
    let d = points
        .iter()
        .map(|p| (p - drag_point).norm())
        .fold(f64::INFINITY, f64::min);
    if d > 1e-6 {
        return Err(Error::invalid(format!(
            "drag point is {d:e} away from the nearest object point"
        )));
    }
    Ok(())
}

/// Live simulation: particles, grid and the per-particle external forces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub particles: Vec<Particle>,
    pub grid: Grid,
    pub model: Constitutive,
    pub boundary: Boundary,
    pub gravity: Vec3,
    pub dt: f64,
    forces: Vec<Vec3>,
}

impl Simulation {
    /// Set up particles at rest. The condition's force (in units of object
    /// weight) is split evenly across the force region.
    pub fn new(object: &PointCloud, cond: &PhysicsCondition, cfg: &SimConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        cond.validate()?;
        if cond.material == Material::Rigid {
            return Err(Error::invalid("rigid material is handled by the rigid-body backend"));
        }
        let (mu, lambda) = lame_params(cond.youngs_modulus, cond.poisson_ratio)?;
        let bound = cfg.stable_dt(cond.youngs_modulus, cond.poisson_ratio)?;
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::Unstable { dt, bound });
        }
        let n = object.len();
        let total_volume = estimate_volume(&object.positions, cfg.dx());
        let vol0 = total_volume / n as f64;
        let mass = cfg.density * vol0;
        let particles: Vec<Particle> = object.positions.iter().map(|&x| Particle::at_rest(x, mass, vol0)).collect();
        let weight = mass * n as f64 * REFERENCE_GRAVITY;
        let mut forces = vec![Vec3::zeros(); n];
        if cond.force.norm() > 0.0 {
            let region = force_region(&object.positions, &cond.drag_point, cfg.force_region_radius);
            let share = cond.force * weight / region.len() as f64;
            for i in region {
                forces[i] = share;
            }
        }
        Ok(Self {
            particles,
            grid: Grid::new(cfg.grid_res),
            model: Constitutive {
                material: cond.material,
                mu,
                lambda,
                plastic: cfg.plastic,
            },
            boundary: Boundary {
                floor: Some(Floor {
                    height: cond.floor_height,
                    friction: cfg.floor_friction,
                }),
                wall_cells: cfg.wall_cells,
            },
            gravity: cfg.gravity(),
            dt,
            forces,
        })
    }

    /// One P2G / grid update / G2P substep.
    pub fn substep(&mut self, apply_force: bool) -> Result<()> {
        let forces = if apply_force { Some(self.forces.as_slice()) } else { None };
        p2g(&self.particles, &mut self.grid, self.dt, forces, Some(&self.model))?;
        grid_update(&mut self.grid, self.dt, &self.gravity, &self.boundary);
        g2p(&mut self.particles, &self.grid, self.dt, &self.model)
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.x).collect()
    }

    fn is_finite(&self) -> bool {
        self.particles.iter().all(|p| {
            p.x.iter().chain(p.v.iter()).all(|c| c.is_finite())
                && p.f.iter().chain(p.c.iter()).all(|c| c.is_finite())
        })
    }
}

/// Run an MPM simulation for `frames` frames and record positions,
/// deformation gradients and affine matrices at every frame boundary.
pub fn simulate(object: &PointCloud, cond: &PhysicsCondition, cfg: &SimConfig, frames: usize) -> Result<TrajectorySequence> {
    if frames == 0 {
        return Err(Error::invalid("at least one frame is required"));
    }
    check_drag_point(&object.positions, &cond.drag_point)?;
    cond.validate()?;
    let substeps = cfg.substeps(cond.youngs_modulus, cond.poisson_ratio)?;
    let dt = cfg.frame_dt / substeps as f64;
    let mut sim = Simulation::new(object, cond, cfg, dt)?;
    let active_frames = (cfg.force_active_fraction.clamp(0.0, 1.0) * frames as f64).ceil() as usize;

    let mut out_frames = Vec::with_capacity(frames + 1);
    out_frames.push(object.positions.clone());
    let mut def_grads = Vec::with_capacity(frames);
    let mut affines = Vec::with_capacity(frames);
    for frame in 0..frames {
        for sub in 0..substeps {
            sim.substep(frame < active_frames).map_err(|e| match e {
                Error::OutOfDomain { particle, .. } => Error::OutOfDomain {
                    particle,
                    frame,
                    substep: sub,
                },
                Error::Inverted { particle, det } => {
                    log::debug!("inversion at frame {frame}, substep {sub}");
                    Error::Inverted { particle, det }
                }
                other => other,
            })?;
            if !sim.is_finite() {
                return Err(Error::NonFinite { frame, substep: sub });
            }
        }
        out_frames.push(sim.positions());
        def_grads.push(sim.particles.iter().map(|p| p.f).collect::<Vec<Mat3>>());
        affines.push(sim.particles.iter().map(|p| p.c).collect::<Vec<Mat3>>());
    }
    Ok(TrajectorySequence {
        frames: out_frames,
        def_grads: Some(def_grads),
        affines: Some(affines),
        frame_dt: cfg.frame_dt,
    })
}
