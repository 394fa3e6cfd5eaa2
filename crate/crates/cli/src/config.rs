//! Run configuration: one JSON document with a section per subcommand,
//! plus dotted-key overrides from the command line.

use std::path::{Path, PathBuf};

use physdyn_core::datagen::DatasetSpec;
use physdyn_core::losses::LossWeights;
use physdyn_core::{Material, PhysicsCondition};
use physdyn_model::inverse::{EnergyTarget, FreeParams};
use physdyn_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Mesh for `simulate` (and the fallback for `gen-dataset`).
    pub mesh: Option<PathBuf>,
    /// Meshes for `gen-dataset`.
    pub meshes: Vec<PathBuf>,
    pub dataset: DatasetSpec,
    pub simulate: SimulateSection,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub eval: EvalSection,
    pub estimate: EstimateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub material: Material,
    /// Use this condition instead of sampling one.
    pub condition: Option<PhysicsCondition>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { material: Material::Elastic, condition: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Dataset directory written by `gen-dataset`.
    pub data_dir: Option<PathBuf>,
    /// Continue from these parameters instead of a fresh initialization.
    pub init_checkpoint: Option<PathBuf>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub weights: LossWeights,
    pub loss_grid_res: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data_dir: None,
            init_checkpoint: None,
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            warmup_steps: t.warmup_steps,
            weight_decay: t.weight_decay,
            grad_clip: t.grad_clip,
            weights: t.weights,
            loss_grid_res: t.loss_grid_res,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            warmup_steps: self.warmup_steps,
            weight_decay: self.weight_decay,
            grad_clip: self.grad_clip,
            seed,
            weights: self.weights,
            loss_grid_res: self.loss_grid_res,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub checkpoint: Option<PathBuf>,
    /// Trajectory file supplying the input cloud and (unless overridden)
    /// the condition.
    pub trajectory: Option<PathBuf>,
    pub condition: Option<PhysicsCondition>,
    pub steps: usize,
    pub frame_dt: Option<f64>,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { checkpoint: None, trajectory: None, condition: None, steps: 25, frame_dt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub resolution: usize,
    pub loss_grid_res: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { pred: None, gt: None, resolution: physdyn_core::metrics::DEFAULT_VIOU_RESOLUTION, loss_grid_res: 48 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub checkpoint: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub free: FreeParams,
    /// Starting Young's modulus; the trajectory's own value when unset.
    pub init_youngs_modulus: Option<f64>,
    pub learning_rate: f64,
    pub iterations: usize,
    pub patience: usize,
    pub num_t_samples: usize,
    pub target: EnergyTarget,
    /// Also report energies at these log10(E) values.
    pub grid: Vec<f64>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let e = physdyn_model::inverse::EstimateConfig::default();
        Self {
            checkpoint: None,
            trajectory: None,
            free: FreeParams { log10_e: true, ..Default::default() },
            init_youngs_modulus: Some(10f64.powf(5.5)),
            learning_rate: e.learning_rate,
            iterations: e.iterations,
            patience: e.patience,
            num_t_samples: e.energy.num_t_samples,
            target: e.energy.target,
            grid: Vec::new(),
        }
    }
}

/// Parses an override value as JSON, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `a.b.c=value` override. Every key on the path must exist.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let mut node = &mut *doc;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
    }
    *node = parse_value(raw);
    Ok(())
}

/// Loads defaults, overlays the config file (if any), then the overrides.
pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut doc = serde_json::to_value(RunConfig::default()).expect("default config serializes");
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", p.display())))?;
        merge(&mut doc, file);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Path stored under `key`, or a config error naming the key.
pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("config key `{key}` is required")))
}
