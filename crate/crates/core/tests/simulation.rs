use physdyn_core::mpm::{p2g, Grid, Particle, SimConfig, Simulation};
use physdyn_core::rigid::{rigid_simulate, RigidConfig};
use physdyn_core::{mpm::simulate, Mat3, Material, PhysicsCondition, PointCloud, Rng, Vec3};

fn blob(n: usize, lo: Vec3, hi: Vec3, seed: u64) -> PointCloud {
    let mut rng = Rng::new(seed);
    let positions = (0..n)
        .map(|_| Vec3::new(rng.uniform_range(lo.x, hi.x), rng.uniform_range(lo.y, hi.y), rng.uniform_range(lo.z, hi.z)))
        .collect();
    PointCloud::new(positions).unwrap()
}

fn cond(obj: &PointCloud, material: Material, force: Vec3, floor: f64) -> PhysicsCondition {
    PhysicsCondition {
        force,
        drag_point: obj.positions[0],
        youngs_modulus: 3e4,
        poisson_ratio: 0.3,
        floor_height: floor,
        material,
    }
}

#[test]
fn transfer_conserves_mass_and_momentum() {
    let mut rng = Rng::new(3);
    let particles: Vec<Particle> = (0..500)
        .map(|_| {
            let mut p = Particle::at_rest(Vec3::new(rng.uniform_range(0.2, 0.8), rng.uniform_range(0.2, 0.8), rng.uniform_range(0.2, 0.8)), rng.uniform_range(0.5, 2.0), 1e-5);
            p.v = Vec3::new(rng.normal(), rng.normal(), rng.normal());
            p.c = Mat3::from_fn(|_, _| rng.normal());
            p
        })
        .collect();
    let mut grid = Grid::new(32);
    p2g(&particles, &mut grid, 1e-4, None, None).unwrap();
    let m: f64 = particles.iter().map(|p| p.mass).sum();
    let q: Vec3 = particles.iter().map(|p| p.v * p.mass).sum();
    assert!(((grid.total_mass() - m) / m).abs() < 1e-10);
    assert!((grid.total_momentum() - q).norm() / q.norm() < 1e-8);
}

#[test]
fn mpm_runs_keep_floor_and_positive_determinant() {
    let obj = blob(300, Vec3::new(0.35, 0.2, 0.35), Vec3::new(0.65, 0.4, 0.65), 5);
    let cfg = SimConfig { grid_res: 24, frame_dt: 0.02, ..SimConfig::default() };
    let dx = cfg.dx();
    for material in [Material::Elastic, Material::Plasticine, Material::Sand] {
        let c = cond(&obj, material, Vec3::new(0.25, 0.05, 0.0), 0.2);
        let t = simulate(&obj, &c, &cfg, 5).unwrap();
        assert_eq!(t.frames.len(), 6);
        for frame in &t.frames {
            assert!(frame.iter().all(|p| p.y >= c.floor_height - dx));
        }
        if material == Material::Elastic {
            for fs in t.def_grads.as_ref().unwrap() {
                assert!(fs.iter().all(|f| f.determinant() > 0.0));
            }
        }
    }
}

#[test]
fn rest_state_is_stable() {
    let obj = blob(200, Vec3::repeat(0.4), Vec3::repeat(0.6), 6);
    let c = cond(&obj, Material::Elastic, Vec3::zeros(), 0.0);
    let cfg = SimConfig { grid_res: 24, gravity: [0.0; 3], ..SimConfig::default() };
    let dt = cfg.stable_dt(c.youngs_modulus, c.poisson_ratio).unwrap();
    let mut sim = Simulation::new(&obj, &c, &cfg, dt).unwrap();
    for _ in 0..100 {
        sim.substep(false).unwrap();
    }
    let max = sim.positions().iter().zip(&obj.positions).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(max < 1e-8, "max displacement {max}");
}

#[test]
fn rigid_trajectory_is_rigid_with_identity_aux() {
    let obj = blob(150, Vec3::new(0.3, 0.3, 0.3), Vec3::new(0.6, 0.5, 0.5), 7);
    let c = cond(&obj, Material::Rigid, Vec3::new(0.3, 0.2, 0.1), 0.25);
    let t = rigid_simulate(&obj, &c, &SimConfig::default(), &RigidConfig::default(), 12).unwrap();
    for frame in &t.frames {
        for (i, j) in [(0, 1), (5, 77), (20, 149), (3, 100)] {
            let d0 = (obj.positions[i] - obj.positions[j]).norm();
            let d = (frame[i] - frame[j]).norm();
            assert!(((d - d0) / d0).abs() < 1e-6);
        }
    }
}
