//! Single rigid body under gravity, a constant applied force and
//! impulse-based floor contact.

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::mpm::simulate::{check_drag_point, object_mass, SimConfig};
use crate::{Error, Mat3, Material, PhysicsCondition, PointCloud, Result, TrajectorySequence, Vec3, REFERENCE_GRAVITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigidConfig {
    pub substeps_per_frame: usize,
    /// Coefficient of restitution.
    pub restitution: f64,
    pub friction: f64,
}

impl Default for RigidConfig {
    fn default() -> Self {
        Self {
            substeps_per_frame: 64,
            restitution: 0.3,
            friction: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidState {
    pub center: Vec3,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    /// Body-frame inertia tensor about the centre of mass.
    pub inertia_body: Mat3,
    /// Body-frame offsets of the points from the centre of mass.
    pub offsets: Vec<Vec3>,
    pub mass: f64,
}

impl RigidState {
    /// Body at rest with uniform mass per point.
    pub fn from_points(points: &[Vec3], mass: f64) -> Result<Self> {
        if points.is_empty() || !(mass > 0.0) {
            return Err(Error::invalid("rigid body needs points and positive mass"));
        }
        let n = points.len() as f64;
        let center = points.iter().sum::<Vec3>() / n;
        let offsets: Vec<Vec3> = points.iter().map(|p| p - center).collect();
        let m = mass / n;
        let mut inertia = Mat3::zeros();
        for r in &offsets {
            inertia += m * (Mat3::identity() * r.norm_squared() - r * r.transpose());
        }
        // Regularise degenerate (collinear or single-point) bodies.
        let floor = 1e-6 * mass * offsets.iter().map(|r| r.norm_squared()).fold(1e-4, f64::max);
        for i in 0..3 {
            inertia[(i, i)] += floor;
        }
        Ok(Self {
            center,
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            inertia_body: inertia,
            offsets,
            mass,
        })
    }

    pub fn rotation(&self) -> Mat3 {
        *self.orientation.to_rotation_matrix().matrix()
    }

    pub fn inverse_inertia_world(&self) -> Mat3 {
        let r = self.rotation();
        let inv = self.inertia_body.try_inverse().expect("regularised inertia is invertible");
        r * inv * r.transpose()
    }

    pub fn world_point(&self, i: usize) -> Vec3 {
        self.center + self.orientation * self.offsets[i]
    }

    pub fn world_points(&self) -> Vec<Vec3> {
        let r = self.rotation();
        self.offsets.iter().map(|o| self.center + r * o).collect()
    }

    /// Advance by `dt` under a constant `force` applied at body point
    /// `force_point` (if any), gravity, and floor contact at `floor`.
    ///
    /// Translation under constant loads is integrated exactly; angular
    /// velocity is updated semi-implicitly before the orientation.
    pub fn step(&mut self, dt: f64, gravity: &Vec3, force: Option<(Vec3, usize)>, floor: f64, cfg: &RigidConfig) {
        let mut accel = *gravity;
        let mut torque = Vec3::zeros();
        if let Some((f, idx)) = force {
            accel += f / self.mass;
            let r = self.orientation * self.offsets[idx];
            torque += r.cross(&f);
        }
        let inv_i = self.inverse_inertia_world();
        let r = self.rotation();
        let i_world = r * self.inertia_body * r.transpose();
        let w = self.angular_velocity;
        self.angular_velocity += dt * inv_i * (torque - w.cross(&(i_world * w)));

        // Predicted velocity at the end of the step, then contact.
        let v_end = self.linear_velocity + accel * dt;
        let v_start = self.linear_velocity;
        self.linear_velocity = v_end;
        let contact = self.resolve_contact(floor, cfg);
        if contact {
            self.center += dt * self.linear_velocity;
        } else {
            self.center += dt * 0.5 * (v_start + v_end);
        }
        let wv = self.angular_velocity * dt;
        let dq = UnitQuaternion::new(wv);
        let q = dq * self.orientation;
        self.orientation = UnitQuaternion::new_normalize(*q.quaternion());

        // Positional projection out of the floor.
        let lowest = self
            .offsets
            .iter()
            .map(|o| (self.center + self.orientation * o).y)
            .fold(f64::INFINITY, f64::min);
        if lowest < floor {
            self.center.y += floor - lowest;
        }
    }

    /// Impulse at the deepest penetrating point (lowest index on ties).
    /// Returns whether an impulse was applied.
    fn resolve_contact(&mut self, floor: f64, cfg: &RigidConfig) -> bool {
        let r_mat = self.rotation();
        let mut deepest: Option<(usize, f64)> = None;
        for (i, o) in self.offsets.iter().enumerate() {
            let y = self.center.y + (r_mat * o).y;
            if y <= floor && deepest.is_none_or(|(_, d)| y < d) {
                deepest = Some((i, y));
            }
        }
        let Some((idx, _)) = deepest else {
            return false;
        };
        let r = r_mat * self.offsets[idx];
        let n = Vec3::y();
        let vp = self.linear_velocity + self.angular_velocity.cross(&r);
        let vn = vp.dot(&n);
        if vn >= 0.0 {
            return false;
        }
        let inv_i = self.inverse_inertia_world();
        let inv_m = 1.0 / self.mass;
        let k_n = inv_m + n.dot(&(inv_i * r.cross(&n)).cross(&r));
        let jn = -(1.0 + cfg.restitution) * vn / k_n;
        let mut impulse = jn * n;
        let vt = vp - vn * n;
        let vt_norm = vt.norm();
        if vt_norm > 1e-12 {
            let t = vt / vt_norm;
            let k_t = inv_m + t.dot(&(inv_i * r.cross(&t)).cross(&r));
            let jt = (vt_norm / k_t).min(cfg.friction * jn);
            impulse -= jt * t;
        }
        self.linear_velocity += impulse * inv_m;
        self.angular_velocity += inv_i * r.cross(&impulse);
        true
    }
}

/// Simulate a rigid object. Every frame's points are the rigid image of the
/// input cloud; deformation gradients are identity and affine matrices zero.
pub fn rigid_simulate(
    object: &PointCloud,
    cond: &PhysicsCondition,
    sim: &SimConfig,
    cfg: &RigidConfig,
    frames: usize,
) -> Result<TrajectorySequence> {
    if cond.material != Material::Rigid {
        return Err(Error::invalid("rigid_simulate requires the rigid material"));
    }
    if frames == 0 || cfg.substeps_per_frame == 0 {
        return Err(Error::invalid("frames and substeps must be positive"));
    }
    cond.validate()?;
    check_drag_point(&object.positions, &cond.drag_point)?;
    let mass = object_mass(&object.positions, sim);
    let mut state = RigidState::from_points(&object.positions, mass)?;
    let force_point = object
        .positions
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - cond.drag_point).norm_squared().total_cmp(&(b.1 - cond.drag_point).norm_squared()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let force = cond.force * mass * REFERENCE_GRAVITY;
    let gravity = sim.gravity();
    let dt = sim.frame_dt / cfg.substeps_per_frame as f64;
    let active_frames = (sim.force_active_fraction.clamp(0.0, 1.0) * frames as f64).ceil() as usize;
    let n = object.len();

    let mut out = Vec::with_capacity(frames + 1);
    out.push(object.positions.clone());
    for frame in 0..frames {
        let applied = (frame < active_frames && force.norm() > 0.0).then_some((force, force_point));
        for sub in 0..cfg.substeps_per_frame {
            state.step(dt, &gravity, applied, cond.floor_height, cfg);
            let ok = state.center.iter().chain(state.linear_velocity.iter()).chain(state.angular_velocity.iter()).all(|c| c.is_finite());
            if !ok {
                return Err(Error::NonFinite { frame, substep: sub });
            }
        }
        out.push(state.world_points());
    }
    Ok(TrajectorySequence {
        frames: out,
        def_grads: Some(vec![vec![Mat3::identity(); n]; frames]),
        affines: Some(vec![vec![Mat3::zeros(); n]; frames]),
        frame_dt: sim.frame_dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    fn sphere(rng: &mut Rng, n: usize, c: Vec3, r: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                let d = Vec3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
                c + d * r
            })
            .collect()
    }

    fn cond(points: &[Vec3], force: Vec3, floor: f64) -> PhysicsCondition {
        PhysicsCondition {
            force,
            drag_point: points[0],
            youngs_modulus: 1e6,
            poisson_ratio: 0.3,
            floor_height: floor,
            material: Material::Rigid,
        }
    }

    #[test]
    fn static_without_loads() {
        let mut rng = Rng::new(1);
        let pts = sphere(&mut rng, 100, Vec3::repeat(0.5), 0.1);
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let sim = SimConfig {
            gravity: [0.0; 3],
            ..Default::default()
        };
        let t = rigid_simulate(&cloud, &cond(&pts, Vec3::zeros(), 0.0), &sim, &RigidConfig::default(), 5).unwrap();
        for fr in &t.frames {
            for (a, b) in fr.iter().zip(&pts) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn free_fall_matches_kinematics() {
        let mut rng = Rng::new(2);
        let pts = sphere(&mut rng, 100, Vec3::new(0.5, 0.7, 0.5), 0.1);
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let sim = SimConfig::default();
        let t = rigid_simulate(&cloud, &cond(&pts, Vec3::zeros(), 0.1), &sim, &RigidConfig::default(), 4).unwrap();
        let c0 = cloud.centroid();
        for f in 1..=4 {
            let time = f as f64 * sim.frame_dt;
            let c: Vec3 = t.frames[f].iter().sum::<Vec3>() / pts.len() as f64;
            let expect = c0.y - 0.5 * REFERENCE_GRAVITY * time * time;
            assert!(((c.y - expect) / expect).abs() < 1e-6);
        }
    }

    #[test]
    fn pairwise_distances_are_preserved() {
        let mut rng = Rng::new(3);
        let pts = sphere(&mut rng, 60, Vec3::new(0.5, 0.4, 0.5), 0.15);
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let c = cond(&pts, Vec3::new(0.3, 0.2, -0.1), 0.2);
        let t = rigid_simulate(&cloud, &c, &SimConfig::default(), &RigidConfig::default(), 12).unwrap();
        for fr in &t.frames {
            for i in (0..60).step_by(7) {
                for j in (1..60).step_by(5) {
                    let d0 = (pts[i] - pts[j]).norm();
                    let d = (fr[i] - fr[j]).norm();
                    if d0 > 0.0 {
                        assert!(((d - d0) / d0).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn elastic_bounce_conserves_kinetic_energy() {
        let mut rng = Rng::new(4);
        let mut pts = sphere(&mut rng, 200, Vec3::new(0.5, 0.5, 0.5), 0.1);
        pts.push(Vec3::new(0.5, 0.4, 0.5));
        let mut state = RigidState::from_points(&pts, 1.0).unwrap();
        let cfg = RigidConfig {
            restitution: 1.0,
            friction: 0.0,
            substeps_per_frame: 1,
        };
        let g = Vec3::new(0.0, -9.8, 0.0);
        let dt = 1e-5;
        let energy = |s: &RigidState| {
            let r = s.rotation();
            let i_world = r * s.inertia_body * r.transpose();
            0.5 * s.mass * s.linear_velocity.norm_squared() + 0.5 * s.angular_velocity.dot(&(i_world * s.angular_velocity))
        };
        let mut pre = 0.0;
        for _ in 0..100_000 {
            let before = energy(&state);
            state.step(dt, &g, None, 0.2, &cfg);
            if state.linear_velocity.y > 0.0 {
                pre = before;
                break;
            }
        }
        assert!(pre > 0.0, "body never bounced");
        let post = energy(&state);
        assert!(((post - pre) / pre).abs() < 1e-3, "pre {pre} post {post}");
        assert!((state.orientation.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vertical_bounce_conserves_speed() {
        // Centrally symmetric cloud: the contact point sits under the centre
        // of mass, so the impulse produces no spin.
        let mut rng = Rng::new(6);
        let c = Vec3::new(0.5, 0.5, 0.5);
        let half = sphere(&mut rng, 100, c, 0.1);
        let mut pts: Vec<Vec3> = half.iter().flat_map(|p| [*p, 2.0 * c - p]).collect();
        pts.push(Vec3::new(0.5, 0.4, 0.5));
        pts.push(Vec3::new(0.5, 0.6, 0.5));
        let mut state = RigidState::from_points(&pts, 1.0).unwrap();
        let cfg = RigidConfig {
            restitution: 1.0,
            friction: 0.0,
            substeps_per_frame: 1,
        };
        let g = Vec3::new(0.0, -9.8, 0.0);
        let mut pre = 0.0;
        for _ in 0..100_000 {
            let before = state.linear_velocity.norm();
            state.step(1e-5, &g, None, 0.2, &cfg);
            if state.linear_velocity.y > 0.0 {
                pre = before;
                break;
            }
        }
        assert!(pre > 0.0, "body never bounced");
        let post = state.linear_velocity.norm();
        assert!(((post - pre) / pre).abs() < 1e-3, "pre {pre} post {post}");
    }

    #[test]
    fn quaternion_stays_normalized_under_torque() {
        let mut rng = Rng::new(5);
        let pts = sphere(&mut rng, 50, Vec3::repeat(0.5), 0.1);
        let mut state = RigidState::from_points(&pts, 2.0).unwrap();
        for _ in 0..1000 {
            state.step(1e-3, &Vec3::zeros(), Some((Vec3::new(1.0, 0.5, 0.0), 3)), -1.0, &RigidConfig::default());
            assert!((state.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mpm_material_is_rejected() {
        let pts = vec![Vec3::repeat(0.5), Vec3::repeat(0.6)];
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let mut c = cond(&pts, Vec3::zeros(), 0.0);
        c.material = Material::Sand;
        assert!(rigid_simulate(&cloud, &c, &SimConfig::default(), &RigidConfig::default(), 1).is_err());
    }
}
