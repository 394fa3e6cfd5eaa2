use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use physdyn_core::datagen::{generate_dataset, load_dataset, prepare_animation, read_trajectory, run_simulation, write_trajectory, NamedMesh};
use physdyn_core::geometry::TriangleMesh;
use physdyn_core::losses::{diffusion_loss, floor_loss, physics_loss, velocity_loss, LossGrid, PhysicsAux};
use physdyn_core::{metrics, Rng};
use physdyn_model::inverse::{energy_grid, estimate_params, EnergyConfig, EstimateConfig};
use physdyn_model::{checkpoint, ddim_sample, Model, TrainItem};
use serde_json::{json, Value};

use crate::config::{self, RunConfig};
use crate::{ply, CliError, Common, SCHEMA_VERSION};

pub const TRAJECTORY_FILE: &str = "trajectory.ptrj";
pub const SAMPLE_FILE: &str = "sample.ptrj";
pub const CHECKPOINT_FILE: &str = "checkpoint.pdmc";
pub const LOSS_LOG_FILE: &str = "loss_log.jsonl";

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let cfg = config::load(common.config.as_deref(), &common.overrides, common.seed)?;
    std::fs::create_dir_all(&common.out_dir)?;
    Ok(cfg)
}

/// Adds `schema_version`, prints the report and saves it as `name`.
fn emit(out_dir: &Path, name: &str, mut report: Value) -> Result<(), CliError> {
    report
        .as_object_mut()
        .expect("reports are JSON objects")
        .insert("schema_version".into(), json!(SCHEMA_VERSION));
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out_dir.join(name), format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

fn read_mesh(path: &Path, key: &str) -> Result<TriangleMesh, CliError> {
    TriangleMesh::read_obj(path).map_err(|e| CliError::Config(format!("cannot load mesh {} (config key `{key}`): {e}", path.display())))
}

fn read_traj(path: &Path, key: &str) -> Result<(physdyn_core::TrajectorySequence, physdyn_core::PhysicsCondition), CliError> {
    read_trajectory(path).map_err(|e| CliError::Io(format!("cannot read trajectory {} (config key `{key}`): {e}", path.display())))
}

pub fn simulate(common: &Common, export_ply: bool) -> Result<(), CliError> {
    let cfg = load(common)?;
    let mesh = read_mesh(config::require(&cfg.mesh, "mesh")?, "mesh")?;
    let mut spec = cfg.dataset.clone();
    spec.seed = cfg.seed;
    spec.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let (object, sampled) = prepare_animation(&spec, &mesh, cfg.simulate.material, &mut rng)?;
    let cond = cfg.simulate.condition.clone().unwrap_or(sampled);
    cond.validate()?;
    let traj = run_simulation(&object, &cond, &spec.sim, &spec.rigid, spec.num_frames)?;
    let file = common.out_dir.join(TRAJECTORY_FILE);
    write_trajectory(&file, &traj, &cond)?;
    let ply_files = if export_ply { ply::write_sequence(&common.out_dir.join("ply"), &traj)?.len() } else { 0 };
    emit(
        &common.out_dir,
        "simulate.json",
        json!({
            "file": file,
            "points": traj.num_points(),
            "frames": traj.num_frames(),
            "condition": cond,
            "ply_files": ply_files,
        }),
    )
}

pub fn gen_dataset(common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?;
    let paths = if !cfg.meshes.is_empty() {
        cfg.meshes.clone()
    } else {
        vec![config::require(&cfg.mesh, "meshes")?.to_path_buf()]
    };
    let meshes = paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            read_mesh(p, "meshes").map(|mesh| NamedMesh { name, mesh })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = cfg.dataset.clone();
    spec.seed = cfg.seed;
    let manifest = generate_dataset(&spec, &meshes, &common.out_dir)?;
    emit(
        &common.out_dir,
        "gen_dataset.json",
        json!({
            "requested": spec.counts.total(),
            "written": manifest.rows.len(),
            "skipped": manifest.skipped.len(),
            "out_dir": common.out_dir,
        }),
    )
}

pub fn train(common: &Common, steps: Option<usize>) -> Result<(), CliError> {
    let mut cfg = load(common)?;
    if let Some(s) = steps {
        cfg.train.steps = s;
    }
    let data_dir = config::require(&cfg.train.data_dir, "train.data_dir")?;
    let data: Vec<TrainItem> = load_dataset(data_dir)?
        .into_iter()
        .map(|(traj, cond)| TrainItem { traj, cond })
        .collect();
    let first = data
        .first()
        .ok_or_else(|| CliError::Config(format!("dataset {} has no trajectories", data_dir.display())))?;
    let (n, f) = (first.traj.num_points(), first.traj.num_frames());
    if data.iter().any(|d| d.traj.num_points() != n || d.traj.num_frames() != f) {
        return Err(CliError::Config("dataset trajectories differ in size".into()));
    }
    let mut model = match &cfg.train.init_checkpoint {
        Some(p) => checkpoint::load(p)?,
        None => {
            let mut mc = cfg.model.clone();
            mc.num_points = n;
            mc.num_frames = f;
            Model::new(mc, Rng::derive_seed(cfg.seed, 1))?
        }
    };
    if (model.config.num_points, model.config.num_frames) != (n, f) {
        return Err(CliError::Config(format!(
            "checkpoint expects {}x{} trajectories, dataset has {f}x{n}",
            model.config.num_frames, model.config.num_points
        )));
    }
    let tc = cfg.train.to_train_config(cfg.seed);
    let log_path = common.out_dir.join(LOSS_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path)?);
    let mut write_err = None;
    let logs = physdyn_model::train(&mut model, &data, &tc, |entry| {
        if write_err.is_some() {
            return;
        }
        let mut line = serde_json::to_value(entry).expect("log entries serialize");
        line.as_object_mut().expect("object").insert("schema_version".into(), json!(SCHEMA_VERSION));
        if let Err(e) = writeln!(log, "{line}") {
            write_err = Some(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    log.flush()?;
    let ckpt = common.out_dir.join(CHECKPOINT_FILE);
    checkpoint::save(&ckpt, &model)?;
    emit(
        &common.out_dir,
        "train.json",
        json!({
            "steps": logs.len(),
            "trajectories": data.len(),
            "final_loss": logs.last().map(|l| l.loss),
            "checkpoint": ckpt,
            "loss_log": log_path,
            "model": model.config,
        }),
    )
}

pub fn sample(common: &Common, export_ply: bool) -> Result<(), CliError> {
    let cfg = load(common)?;
    let model = checkpoint::load(config::require(&cfg.sample.checkpoint, "sample.checkpoint")?)?;
    let (reference, file_cond) = read_traj(config::require(&cfg.sample.trajectory, "sample.trajectory")?, "sample.trajectory")?;
    let cond = cfg.sample.condition.clone().unwrap_or(file_cond);
    cond.validate()?;
    let frame_dt = cfg.sample.frame_dt.unwrap_or(reference.frame_dt);
    let mut rng = Rng::new(cfg.seed);
    let traj = ddim_sample(&model, &cond, reference.initial(), cfg.sample.steps, &mut rng, frame_dt)?;
    let file = common.out_dir.join(SAMPLE_FILE);
    write_trajectory(&file, &traj, &cond)?;
    let ply_files = if export_ply { ply::write_sequence(&common.out_dir.join("ply"), &traj)?.len() } else { 0 };
    emit(
        &common.out_dir,
        "sample.json",
        json!({ "file": file, "steps": cfg.sample.steps, "condition": cond, "ply_files": ply_files }),
    )
}

pub fn eval(common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?;
    let (pred, _) = read_traj(config::require(&cfg.eval.pred, "eval.pred")?, "eval.pred")?;
    let (gt, cond) = read_traj(config::require(&cfg.eval.gt, "eval.gt")?, "eval.gt")?;
    let (p, g) = (pred.to_array(), gt.to_array());
    let m = metrics::evaluate_sequence(&p, &g, cfg.eval.resolution)?;
    let velocity = if p.frames >= 2 { Some(velocity_loss(&p, &g)?) } else { None };
    let physics = match (&gt.def_grads, &gt.affines) {
        (Some(def_grads), Some(affines)) if cond.material.is_mpm() && p.frames >= 3 => {
            let aux = PhysicsAux { def_grads, affines, masses: None };
            let lg = LossGrid { grid_res: cfg.eval.loss_grid_res, frame_dt: gt.frame_dt };
            Some(physics_loss(&p, &aux, &lg)?)
        }
        _ => None,
    };
    emit(
        &common.out_dir,
        "eval.json",
        json!({
            "viou": m.viou,
            "chamfer": m.chamfer,
            "l2": m.l2,
            "plausibility": {
                "diffusion": diffusion_loss(&p, &g)?,
                "velocity": velocity,
                "physics": physics,
                "floor": floor_loss(&p, cond.floor_height),
            },
        }),
    )
}

pub fn estimate(common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?;
    let s = &cfg.estimate;
    let model = checkpoint::load(config::require(&s.checkpoint, "estimate.checkpoint")?)?;
    let (traj, observed) = read_traj(config::require(&s.trajectory, "estimate.trajectory")?, "estimate.trajectory")?;
    let mut init = observed.clone();
    if let Some(e) = s.init_youngs_modulus {
        init.youngs_modulus = e;
    }
    init.validate()?;
    let energy = EnergyConfig { num_t_samples: s.num_t_samples, seed: cfg.seed, target: s.target };
    let ec = EstimateConfig { learning_rate: s.learning_rate, iterations: s.iterations, patience: s.patience, energy: energy.clone() };
    let est = estimate_params(&model, &traj, &init, s.free, &ec)?;
    let grid: Vec<Value> = if s.grid.is_empty() {
        Vec::new()
    } else {
        energy_grid(&model, &traj, &init, &s.grid, &energy)?
            .into_iter()
            .zip(&s.grid)
            .map(|(e, v)| json!({ "log10_e": v, "energy": e }))
            .collect()
    };
    emit(
        &common.out_dir,
        "estimate.json",
        json!({
            "condition": est.cond,
            "log10_youngs_modulus": est.cond.youngs_modulus.log10(),
            "energy": est.energy,
            "energy_trace": est.energy_trace,
            "diverged": est.diverged,
            "initial_condition": init,
            "grid": grid,
        }),
    )
}
