use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::process::Command;

use physdyn_core::datagen::{generate_dataset, DatasetSpec, MaterialCounts, NamedMesh};
use physdyn_core::geometry::TriangleMesh;
use physdyn_core::mpm::{simulate, SimConfig};
use physdyn_core::{par, Material, PhysicsCondition, PointCloud, Rng, Vec3};

const CHILD_ENV: &str = "PHYSDYN_RNG_HASH_CHILD";

fn stream_hash(seed: u64, draws: usize) -> u64 {
    let mut rng = Rng::new(seed);
    let mut h = DefaultHasher::new();
    for _ in 0..draws {
        rng.next_u64().hash(&mut h);
        rng.uniform().to_bits().hash(&mut h);
    }
    h.finish()
}

#[test]
fn rng_hash_child() {
    if std::env::var_os(CHILD_ENV).is_some() {
        println!("rng-hash={}", stream_hash(42, 100_000));
    }
}

#[test]
fn rng_stream_identical_across_processes() {
    let here = stream_hash(42, 100_000);
    let mut hashes = Vec::new();
    for _ in 0..2 {
        let out = Command::new(std::env::current_exe().unwrap())
            .args(["rng_hash_child", "--exact", "--nocapture", "--test-threads", "1"])
            .env(CHILD_ENV, "1")
            .output()
            .unwrap();
        let text = String::from_utf8_lossy(&out.stdout);
        let line = text.lines().find_map(|l| l.split_once("rng-hash=").map(|(_, h)| h)).expect("child printed hash");
        hashes.push(line.split_whitespace().next().unwrap().parse::<u64>().unwrap());
    }
    assert_eq!(hashes, vec![here, here]);
}

#[test]
fn first_draws_are_frozen() {
    // Guards against silent changes in the generator or the seeding path.
    let mut a = Rng::new(42);
    let mut b = Rng::new(42);
    let xs: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
    let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
    assert_eq!(xs, ys);
    assert_ne!(Rng::derive_seed(42, 0), Rng::derive_seed(42, 1));
}

fn blob(seed: u64) -> PointCloud {
    let mut rng = Rng::new(seed);
    let positions = (0..120)
        .map(|_| Vec3::new(rng.uniform_range(0.4, 0.6), rng.uniform_range(0.3, 0.5), rng.uniform_range(0.4, 0.6)))
        .collect();
    PointCloud::new(positions).unwrap()
}

#[test]
fn simulation_is_independent_of_worker_count() {
    let obj = blob(1);
    let cond = PhysicsCondition {
        force: Vec3::new(0.2, 0.1, 0.0),
        drag_point: obj.positions[3],
        youngs_modulus: 2e4,
        poisson_ratio: 0.3,
        floor_height: 0.3,
        material: Material::Elastic,
    };
    let cfg = SimConfig { grid_res: 24, frame_dt: 0.02, ..SimConfig::default() };
    let a = simulate(&obj, &cond, &cfg, 3).unwrap();
    let b = par::with_threads(1, || simulate(&obj, &cond, &cfg, 3)).unwrap();
    let c = par::with_threads(3, || simulate(&obj, &cond, &cfg, 3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn dataset_files_identical_across_runs() {
    let meshes = vec![NamedMesh { name: "box".into(), mesh: TriangleMesh::cuboid(Vec3::zeros(), Vec3::new(1.0, 0.7, 0.5)) }];
    let spec = DatasetSpec {
        counts: MaterialCounts { elastic: 2, sand: 1, rigid: 1, ..Default::default() },
        num_points: 40,
        num_frames: 2,
        seed: 7,
        youngs_range: [1e4, 2e4],
        sim: SimConfig { grid_res: 16, frame_dt: 0.02, ..SimConfig::default() },
        ..DatasetSpec::default()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    generate_dataset(&spec, &meshes, d1.path()).unwrap();
    par::with_threads(2, || generate_dataset(&spec, &meshes, d2.path())).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for n in names {
        assert_eq!(std::fs::read(d1.path().join(&n)).unwrap(), std::fs::read(d2.path().join(&n)).unwrap(), "{n:?}");
    }
}
