//! Dataset recipe: condition sampling, augmentation, batch generation and
//! the on-disk trajectory format.

pub mod format;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{Rotation3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::geometry::{farthest_point_indices, normalize_to_domain, sample_surface_points, sample_volume_points, TriangleMesh};
use crate::mpm::{simulate, SimConfig};
use crate::rigid::{rigid_simulate, RigidConfig};
use crate::spatial::GridIndex;
use crate::{par, Error, Mat3, Material, PhysicsCondition, PointCloud, Result, Rng, TrajectorySequence, Vec3};

pub use format::{read_trajectory, write_trajectory, FormatError};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// A constant force dragging the object resting on the floor.
    DragForce,
    /// No applied force; the object falls onto a floor below it.
    GravityDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSampling {
    Surface,
    Volume,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialCounts {
    pub elastic: usize,
    pub plasticine: usize,
    pub sand: usize,
    pub rigid: usize,
}

impl MaterialCounts {
    pub fn total(&self) -> usize {
        self.elastic + self.plasticine + self.sand + self.rigid
    }

    /// Material of animation `index` (materials are laid out in the order
    /// elastic, plasticine, sand, rigid).
    pub fn material_of(&self, index: usize) -> Option<Material> {
        let mut acc = 0;
        for (m, c) in Material::ALL.iter().zip([self.elastic, self.plasticine, self.sand, self.rigid]) {
            acc += c;
            if index < acc {
                return Some(*m);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub counts: MaterialCounts,
    pub num_points: usize,
    pub num_frames: usize,
    pub seed: u64,
    pub youngs_range: [f64; 2],
    pub poisson_range: [f64; 2],
    /// Force magnitude range in units of the object's weight.
    pub force_range: [f64; 2],
    pub aug_noise: f64,
    pub scenario: Scenario,
    /// Gap between the object's lowest point and the floor for drops.
    pub drop_clearance: f64,
    pub normal_neighbors: usize,
    pub point_sampling: PointSampling,
    /// Draw `fps_oversample * num_points` candidates and thin them with
    /// farthest point sampling. `1` disables the thinning.
    pub fps_oversample: usize,
    pub sim: SimConfig,
    pub rigid: RigidConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            counts: MaterialCounts {
                elastic: 4,
                ..Default::default()
            },
            num_points: 2048,
            num_frames: 24,
            seed: 0,
            youngs_range: [1e4, 1e7],
            poisson_range: [0.05, 0.45],
            force_range: [0.02, 0.3],
            aug_noise: 0.01,
            scenario: Scenario::DragForce,
            drop_clearance: 0.05,
            normal_neighbors: 16,
            point_sampling: PointSampling::Surface,
            fps_oversample: 1,
            sim: SimConfig::default(),
            rigid: RigidConfig::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_points == 0 || self.num_frames == 0 {
            return Err(Error::invalid("num_points and num_frames must be at least 1"));
        }
        let ordered = |r: [f64; 2]| r[0] <= r[1];
        if !(ordered(self.youngs_range) && self.youngs_range[0] > 0.0) {
            return Err(Error::invalid("youngs_range must be positive and ordered"));
        }
        if !(ordered(self.poisson_range) && self.poisson_range[0] > 0.0 && self.poisson_range[1] < 0.5) {
            return Err(Error::invalid("poisson_range must lie inside (0, 0.5)"));
        }
        if !(ordered(self.force_range) && self.force_range[0] >= 0.0) {
            return Err(Error::invalid("force_range must be nonnegative and ordered"));
        }
        if self.fps_oversample == 0 {
            return Err(Error::invalid("fps_oversample must be at least 1"));
        }
        self.sim.validate()
    }
}

/// Unit normal at `points[index]` from PCA of its `k` nearest neighbours,
/// oriented away from the cloud centroid.
pub fn outward_normal(points: &[Vec3], index: &GridIndex, at: usize, k: usize, centroid: &Vec3) -> Vec3 {
    let p = points[at];
    let nbrs = index.knn(&p, k.max(3));
    let mean = nbrs.iter().map(|&(i, _)| points[i]).sum::<Vec3>() / nbrs.len() as f64;
    let mut cov = Mat3::zeros();
    for &(i, _) in &nbrs {
        let d = points[i] - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let mut n: Vec3 = eig.eigenvectors.column(imin).into_owned();
    let out = p - centroid;
    let dot = n.dot(&out);
    if dot < 0.0 {
        n = -n;
    } else if dot == 0.0 || !n.iter().all(|c| c.is_finite()) {
        n = if out.norm() > 0.0 { out.normalize() } else { Vec3::y() };
    }
    n.normalize()
}

/// Draw a physics condition for `object` following the dataset recipe.
pub fn sample_condition(object: &PointCloud, rng: &mut Rng, spec: &DatasetSpec, material: Material) -> PhysicsCondition {
    let pts = &object.positions;
    let drag_index = rng.index(pts.len());
    let log_lo = spec.youngs_range[0].log10();
    let log_hi = spec.youngs_range[1].log10();
    let youngs = 10f64.powf(rng.uniform_range(log_lo, log_hi)).clamp(spec.youngs_range[0], spec.youngs_range[1]);
    let poisson = rng.uniform_range(spec.poisson_range[0], spec.poisson_range[1]);
    let magnitude = rng.uniform_range(spec.force_range[0], spec.force_range[1]);
    let lowest = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let (force, floor_height) = match spec.scenario {
        Scenario::DragForce => {
            let index = GridIndex::new(pts, 4.0);
            let n = outward_normal(pts, &index, drag_index, spec.normal_neighbors, &object.centroid());
            (n * magnitude, lowest)
        }
        Scenario::GravityDrop => (Vec3::zeros(), lowest - spec.drop_clearance),
    };
    PhysicsCondition {
        force,
        drag_point: pts[drag_index],
        youngs_modulus: youngs,
        poisson_ratio: poisson,
        floor_height: floor_height.clamp(0.0, 1.0),
        material,
    }
}

/// Add `N(0, sigma^2)` noise to every coordinate.
pub fn add_noise(object: &PointCloud, sigma: f64, rng: &mut Rng) -> PointCloud {
    let positions = object
        .positions
        .iter()
        .map(|p| p + Vec3::new(rng.normal(), rng.normal(), rng.normal()) * sigma)
        .collect();
    PointCloud { positions }
}

/// Rotate by `angle` about the vertical axis through the centroid, add
/// noise, then map back into the domain.
pub fn augment_with(object: &PointCloud, angle: f64, sigma: f64, margin: f64, rng: &mut Rng) -> Result<PointCloud> {
    let c = object.centroid();
    let rot = Rotation3::from_axis_angle(&Vec3::y_axis(), angle);
    let rotated = PointCloud {
        positions: object.positions.iter().map(|p| c + rot * (p - c)).collect(),
    };
    let noisy = if sigma > 0.0 { add_noise(&rotated, sigma, rng) } else { rotated };
    Ok(normalize_to_domain(&noisy, margin)?.0)
}

/// Random rotation about the vertical axis plus point noise.
pub fn augment(object: &PointCloud, rng: &mut Rng, spec: &DatasetSpec) -> Result<PointCloud> {
    let angle = rng.uniform_range(0.0, 2.0 * PI);
    augment_with(object, angle, spec.aug_noise, spec.sim.margin, rng)
}

/// Run the simulator appropriate for the condition's material.
pub fn run_simulation(object: &PointCloud, cond: &PhysicsCondition, sim: &SimConfig, rigid: &RigidConfig, frames: usize) -> Result<TrajectorySequence> {
    match cond.material {
        Material::Rigid => {
            let mut t = rigid_simulate(object, cond, sim, rigid, frames)?;
            t.def_grads = None;
            t.affines = None;
            Ok(t)
        }
        _ => simulate(object, cond, sim, frames),
    }
}

/// A mesh with the name recorded in the manifest.
#[derive(Debug, Clone)]
pub struct NamedMesh {
    pub name: String,
    pub mesh: TriangleMesh,
}

/// Input cloud and condition of one animation, before simulation.
pub fn prepare_animation(spec: &DatasetSpec, mesh: &TriangleMesh, material: Material, rng: &mut Rng) -> Result<(PointCloud, PhysicsCondition)> {
    let count = spec.num_points * spec.fps_oversample;
    let raw = match spec.point_sampling {
        PointSampling::Surface => sample_surface_points(mesh, count, rng)?,
        PointSampling::Volume => sample_volume_points(mesh, count, rng)?,
    };
    let raw = if spec.fps_oversample > 1 {
        let idx = farthest_point_indices(&raw.positions, spec.num_points, 0)?;
        PointCloud {
            positions: idx.into_iter().map(|i| raw.positions[i]).collect(),
        }
    } else {
        raw
    };
    let (normalized, _) = normalize_to_domain(&raw, spec.sim.margin)?;
    let object = augment(&normalized, rng, spec)?;
    let cond = sample_condition(&object, rng, spec, material);
    Ok((object, cond))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub schema_version: u32,
    pub index: usize,
    pub file: Option<String>,
    pub seed: u64,
    pub mesh: String,
    pub material: Material,
    pub scenario: Scenario,
    pub condition: Option<PhysicsCondition>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Rows written to `manifest.jsonl` (successful animations) and
/// `skipped.jsonl` (failed simulations with the reason).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub skipped: Vec<ManifestRow>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SKIPPED_FILE: &str = "skipped.jsonl";

/// Generate every animation of `spec`, write one `PTRJ` file per success and
/// the manifests. Output depends only on `(spec, meshes)`; each animation
/// uses its own stream derived from `(seed, index)`.
pub fn generate_dataset(spec: &DatasetSpec, meshes: &[NamedMesh], out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    if meshes.is_empty() {
        return Err(Error::invalid("at least one mesh is required"));
    }
    std::fs::create_dir_all(out_dir)?;
    let total = spec.counts.total();
    let mut manifest = Manifest::default();
    let chunk = (par::num_threads() * 2).max(1);
    let mut start = 0;
    while start < total {
        let end = (start + chunk).min(total);
        let results = par::map_range(end - start, |k| {
            let index = start + k;
            let seed = Rng::derive_seed(spec.seed, index as u64);
            let mut rng = Rng::new(seed);
            let material = spec.counts.material_of(index).expect("index below total");
            let mesh = &meshes[index % meshes.len()];
            let prepared = prepare_animation(spec, &mesh.mesh, material, &mut rng);
            let outcome = match prepared {
                Err(e) => Err((e, None)),
                Ok((object, cond)) => match run_simulation(&object, &cond, &spec.sim, &spec.rigid, spec.num_frames) {
                    Ok(t) => Ok((t, cond)),
                    Err(e) => {
                        log::warn!("animation {index} (seed {seed}) skipped: {e}");
                        Err((e, Some(cond)))
                    }
                },
            };
            (index, seed, material, mesh.name.clone(), outcome)
        });
        for (index, seed, material, mesh, outcome) in results {
            let mut row = ManifestRow {
                schema_version: MANIFEST_SCHEMA_VERSION,
                index,
                file: None,
                seed,
                mesh,
                material,
                scenario: spec.scenario,
                condition: None,
                status: Status::Ok,
                reason: None,
            };
            match outcome {
                Ok((traj, cond)) => {
                    let name = format!("anim_{index:05}.ptrj");
                    write_trajectory(out_dir.join(&name), &traj, &cond)?;
                    row.file = Some(name);
                    row.condition = Some(cond);
                    manifest.rows.push(row);
                }
                Err((e, cond)) => {
                    row.condition = cond;
                    row.status = Status::Skipped;
                    row.reason = Some(e.to_string());
                    manifest.skipped.push(row);
                }
            }
        }
        start = end;
    }
    write_jsonl(&out_dir.join(MANIFEST_FILE), &manifest.rows)?;
    write_jsonl(&out_dir.join(SKIPPED_FILE), &manifest.skipped)?;
    Ok(manifest)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Read `manifest.jsonl` from a dataset directory.
pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Load every successful trajectory listed in a dataset's manifest.
pub fn load_dataset(dir: &Path) -> Result<Vec<(TrajectorySequence, PhysicsCondition)>> {
    read_manifest(dir)?
        .into_iter()
        .filter_map(|r| r.file)
        .map(|f| read_trajectory(dir.join(f)))
        .collect()
}
