//! Spatio-temporal transformer denoiser.
//!
//! Token rows are laid out frame-major: row `f * N + p` holds point `p` of
//! frame `f` for `f in 0..=F` (frame 0 is the input cloud), followed by one
//! condition token per simulated frame.

use std::sync::Arc;

use physdyn_core::{PhysicsCondition, Rng, TrajArray, Vec3};
use serde::{Deserialize, Serialize};

use crate::schedule::NoiseSchedule;
use crate::tape::{Graph, Tensor, Var, NO_GROUP};
use crate::{Error, Result};

/// Size of the standardized condition vector.
pub const COND_INPUT_DIM: usize = 13;

/// Range of log10(E) mapped onto [-1, 1].
pub const LOG10_E_RANGE: (f64, f64) = (4.0, 7.0);
/// Range of Poisson's ratio mapped onto [-1, 1].
pub const POISSON_RANGE: (f64, f64) = (0.05, 0.45);
/// Force magnitude (in units of object weight) mapped to 1.
pub const FORCE_SCALE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub latent_dim: usize,
    pub num_heads: usize,
    pub cond_token_dim: usize,
    pub mlp_ratio: usize,
    pub num_points: usize,
    pub num_frames: usize,
    /// Training diffusion steps `T`.
    pub diffusion_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 4,
            latent_dim: 64,
            num_heads: 4,
            cond_token_dim: 64,
            mlp_ratio: 2,
            num_points: 64,
            num_frames: 8,
            diffusion_steps: 1000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("latent_dim", self.latent_dim),
            ("num_heads", self.num_heads),
            ("cond_token_dim", self.cond_token_dim),
            ("mlp_ratio", self.mlp_ratio),
            ("num_points", self.num_points),
            ("num_frames", self.num_frames),
            ("diffusion_steps", self.diffusion_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.latent_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "latent_dim {} not divisible by num_heads {}",
                self.latent_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.diffusion_steps)
    }
}

/// Maps a condition to the network's standardized input vector:
/// force / 0.3, drag point to [-1, 1], log10(E) and ν affinely onto [-1, 1]
/// over the training ranges, 2h - 1 and the material one-hot.
pub fn standardize_condition(cond: &PhysicsCondition) -> [f64; COND_INPUT_DIM] {
    let mut v = [0.0; COND_INPUT_DIM];
    for k in 0..3 {
        v[k] = cond.force[k] / FORCE_SCALE;
        v[3 + k] = 2.0 * cond.drag_point[k] - 1.0;
    }
    v[6] = standardize_log10_e(cond.youngs_modulus.log10());
    v[7] = standardize_poisson(cond.poisson_ratio);
    v[8] = 2.0 * cond.floor_height - 1.0;
    v[9..].copy_from_slice(&cond.material.one_hot());
    v
}

pub fn standardize_log10_e(log10_e: f64) -> f64 {
    let (lo, hi) = LOG10_E_RANGE;
    2.0 * (log10_e - lo) / (hi - lo) - 1.0
}

pub fn standardize_poisson(nu: f64) -> f64 {
    let (lo, hi) = POISSON_RANGE;
    2.0 * (nu - lo) / (hi - lo) - 1.0
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub values: Vec<Tensor>,
}

impl Params {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|t| t.data.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerIdx {
    mod_w: usize,
    mod_b: usize,
    s_qkv_w: usize,
    s_qkv_b: usize,
    s_out_w: usize,
    s_out_b: usize,
    t_qkv_w: usize,
    t_qkv_b: usize,
    t_out_w: usize,
    t_out_b: usize,
    ff_w1: usize,
    ff_b1: usize,
    ff_w2: usize,
    ff_b2: usize,
}

#[derive(Debug, Clone)]
struct ParamIdx {
    in_w: usize,
    in_b: usize,
    t_w1: usize,
    t_b1: usize,
    t_w2: usize,
    t_b2: usize,
    c_w1: usize,
    c_b1: usize,
    c_w2: usize,
    c_b2: usize,
    c_proj_w: usize,
    c_proj_b: usize,
    layers: Vec<LayerIdx>,
    out_mod_w: usize,
    out_mod_b: usize,
    head_w: usize,
    head_b: usize,
}

/// Modulation columns per layer: shift/scale/gate for spatial point
/// tokens, spatial condition tokens, temporal and feed-forward sublayers.
const MOD_CHUNKS: usize = 12;

/// Builds the ordered parameter shape list.
fn param_shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize, f64)> {
    let d = cfg.latent_dim;
    let dc = cfg.cond_token_dim;
    let r = cfg.mlp_ratio * d;
    let w = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
    let mut v = vec![
        ("in.w".to_string(), 3, d, 1.0),
        ("in.b".into(), 1, d, 0.0),
        ("time.w1".into(), d, d, w(d)),
        ("time.b1".into(), 1, d, 0.0),
        ("time.w2".into(), d, d, w(d)),
        ("time.b2".into(), 1, d, 0.0),
        ("cond.w1".into(), COND_INPUT_DIM, dc, w(COND_INPUT_DIM)),
        ("cond.b1".into(), 1, dc, 0.0),
        ("cond.w2".into(), dc, dc, w(dc)),
        ("cond.b2".into(), 1, dc, 0.0),
        ("cond.proj.w".into(), dc, d, w(dc)),
        ("cond.proj.b".into(), 1, d, 0.0),
    ];
    for l in 0..cfg.num_layers {
        let p = |s: &str| format!("layer{l}.{s}");
        v.extend([
            (p("mod.w"), d, MOD_CHUNKS * d, 0.5 * w(d)),
            (p("mod.b"), 1, MOD_CHUNKS * d, 0.0),
            (p("spatial.qkv.w"), d, 3 * d, w(d)),
            (p("spatial.qkv.b"), 1, 3 * d, 0.0),
            (p("spatial.out.w"), d, d, w(d)),
            (p("spatial.out.b"), 1, d, 0.0),
            (p("temporal.qkv.w"), d, 3 * d, w(d)),
            (p("temporal.qkv.b"), 1, 3 * d, 0.0),
            (p("temporal.out.w"), d, d, w(d)),
            (p("temporal.out.b"), 1, d, 0.0),
            (p("ffn.w1"), d, r, w(d)),
            (p("ffn.b1"), 1, r, 0.0),
            (p("ffn.w2"), r, d, w(r)),
            (p("ffn.b2"), 1, d, 0.0),
        ]);
    }
    v.extend([
        ("out.mod.w".into(), d, 2 * d, 0.5 * w(d)),
        ("out.mod.b".into(), 1, 2 * d, 0.0),
        ("head.w".into(), d, 3, 0.1 * w(d)),
        ("head.b".into(), 1, 3, 0.0),
    ]);
    v
}

fn build_index(cfg: &ModelConfig, params: &Params) -> Result<ParamIdx> {
    let get = |name: &str| {
        params
            .index_of(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    };
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let p = |s: &str| get(&format!("layer{l}.{s}"));
        layers.push(LayerIdx {
            mod_w: p("mod.w")?,
            mod_b: p("mod.b")?,
            s_qkv_w: p("spatial.qkv.w")?,
            s_qkv_b: p("spatial.qkv.b")?,
            s_out_w: p("spatial.out.w")?,
            s_out_b: p("spatial.out.b")?,
            t_qkv_w: p("temporal.qkv.w")?,
            t_qkv_b: p("temporal.qkv.b")?,
            t_out_w: p("temporal.out.w")?,
            t_out_b: p("temporal.out.b")?,
            ff_w1: p("ffn.w1")?,
            ff_b1: p("ffn.b1")?,
            ff_w2: p("ffn.w2")?,
            ff_b2: p("ffn.b2")?,
        });
    }
    Ok(ParamIdx {
        in_w: get("in.w")?,
        in_b: get("in.b")?,
        t_w1: get("time.w1")?,
        t_b1: get("time.b1")?,
        t_w2: get("time.w2")?,
        t_b2: get("time.b2")?,
        c_w1: get("cond.w1")?,
        c_b1: get("cond.b1")?,
        c_w2: get("cond.w2")?,
        c_b2: get("cond.b2")?,
        c_proj_w: get("cond.proj.w")?,
        c_proj_b: get("cond.proj.b")?,
        layers,
        out_mod_w: get("out.mod.w")?,
        out_mod_b: get("out.mod.b")?,
        head_w: get("head.w")?,
        head_b: get("head.b")?,
    })
}

/// Sinusoidal embedding of a scalar position into `d` channels.
pub fn sinusoidal(pos: f64, d: usize) -> Vec<f64> {
    let half = d / 2;
    let mut out = vec![0.0; d];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}

/// Row groupings shared by every layer for a given `(N, F)`.
struct Layout {
    n: usize,
    f: usize,
    spatial_seqs: Arc<Vec<Vec<usize>>>,
    temporal_seqs: Arc<Vec<Vec<usize>>>,
    /// Spatial modulation: simulated point rows 0, condition rows 1.
    spatial_groups: Arc<Vec<u32>>,
    /// All point rows 0 (frame 0 included), condition rows untouched.
    point_groups: Arc<Vec<u32>>,
    /// Simulated point rows 0, everything else gated to zero.
    update_groups: Arc<Vec<u32>>,
    /// Rows of the simulated frames, frame-major.
    output_rows: Arc<Vec<usize>>,
}

impl Layout {
    fn new(n: usize, f: usize) -> Self {
        let r0 = (f + 1) * n;
        let rows = r0 + f;
        let spatial_seqs = (1..=f)
            .map(|fr| (fr * n..(fr + 1) * n).chain(std::iter::once(r0 + fr - 1)).collect())
            .collect();
        let temporal_seqs = (0..n).map(|p| (0..=f).map(|fr| fr * n + p).collect()).collect();
        let mut spatial_groups = vec![NO_GROUP; rows];
        let mut point_groups = vec![NO_GROUP; rows];
        let mut update_groups = vec![NO_GROUP; rows];
        for r in 0..r0 {
            point_groups[r] = 0;
            if r >= n {
                spatial_groups[r] = 0;
                update_groups[r] = 0;
            }
        }
        for g in spatial_groups.iter_mut().skip(r0) {
            *g = 1;
        }
        Self {
            n,
            f,
            spatial_seqs: Arc::new(spatial_seqs),
            temporal_seqs: Arc::new(temporal_seqs),
            spatial_groups: Arc::new(spatial_groups),
            point_groups: Arc::new(point_groups),
            update_groups: Arc::new(update_groups),
            output_rows: Arc::new((n..r0).collect()),
        }
    }

    fn rows(&self) -> usize {
        (self.f + 1) * self.n + self.f
    }
}

/// The per-layer modulation vectors, each `[1, d]`.
struct Mods {
    sp_shift: Var,
    sp_scale: Var,
    sp_gate: Var,
    tm_shift: Var,
    tm_scale: Var,
    tm_gate: Var,
    ff_shift: Var,
    ff_scale: Var,
    ff_gate: Var,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
    idx: ParamIdx,
}

/// Handles returned by [`Model::build`].
pub struct Forward {
    pub graph: Graph,
    /// Predicted simulated frames, `[F * N, 3]`.
    pub output: Var,
    /// The standardized condition vector input, `[1, 13]`.
    pub cond_input: Var,
    /// Parameter nodes, indexed like [`Params::values`].
    pub param_vars: Vec<Var>,
}

impl Model {
    /// Fresh parameters drawn deterministically from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (name, r, c, std) in param_shapes(&config) {
            let data = if std == 0.0 { vec![0.0; r * c] } else { (0..r * c).map(|_| rng.normal() * std).collect() };
            names.push(name);
            values.push(Tensor::from_vec(r, c, data));
        }
        Self::from_params(config, Params { names, values })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        for (name, r, c, _) in param_shapes(&config) {
            let i = params
                .index_of(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            let t = &params.values[i];
            if (t.rows, t.cols) != (r, c) {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` is {}x{}, expected {r}x{c}",
                    t.rows, t.cols
                )));
            }
        }
        let idx = build_index(&config, &params)?;
        Ok(Self { config, params, idx })
    }

    fn check_shapes(&self, noisy: &TrajArray, p0: &[Vec3]) -> Result<()> {
        let (n, f) = (self.config.num_points, self.config.num_frames);
        if noisy.points != n || noisy.frames != f || p0.len() != n {
            return Err(Error::Shape(format!(
                "model expects {f} frames of {n} points, got {} frames of {} points and a {}-point input cloud",
                noisy.frames,
                noisy.points,
                p0.len()
            )));
        }
        Ok(())
    }

    /// The condition token `MLP_phys(standardize(cond))`, length `d_c`.
    pub fn embed_condition(&self, cond: &PhysicsCondition) -> Vec<f64> {
        let mut g = Graph::new();
        let pv = self.param_vars(&mut g);
        let c = g.input(Tensor::from_vec(1, COND_INPUT_DIM, standardize_condition(cond).to_vec()));
        let out = self.cond_mlp(&mut g, &pv, c);
        g.value(out).data.clone()
    }

    fn param_vars(&self, g: &mut Graph) -> Vec<Var> {
        self.params.values.iter().map(|t| g.param(t.clone())).collect()
    }

    fn cond_mlp(&self, g: &mut Graph, pv: &[Var], c: Var) -> Var {
        let ix = &self.idx;
        let h = g.linear(c, pv[ix.c_w1], pv[ix.c_b1]);
        let h = g.silu(h);
        g.linear(h, pv[ix.c_w2], pv[ix.c_b2])
    }

    fn layer_mods(&self, g: &mut Graph, pv: &[Var], li: usize, msrc: Var) -> (Mods, Var, Var, Var) {
        let d = self.config.latent_dim;
        let l = self.idx.layers[li];
        let m = g.linear(msrc, pv[l.mod_w], pv[l.mod_b]);
        let mut chunk = |k: usize| g.slice_cols(m, k * d, d);
        let mods = Mods {
            sp_shift: chunk(0),
            sp_scale: chunk(1),
            sp_gate: chunk(2),
            tm_shift: chunk(6),
            tm_scale: chunk(7),
            tm_gate: chunk(8),
            ff_shift: chunk(9),
            ff_scale: chunk(10),
            ff_gate: chunk(11),
        };
        let c_shift = chunk(3);
        let c_scale = chunk(4);
        let c_gate = chunk(5);
        (mods, c_shift, c_scale, c_gate)
    }

    #[allow(clippy::too_many_arguments)]
    fn spatial(&self, g: &mut Graph, pv: &[Var], li: usize, x: Var, lay: &Layout, m: &Mods, cmod: (Var, Var, Var)) -> Var {
        let l = self.idx.layers[li];
        let shift = g.concat_rows(&[m.sp_shift, cmod.0]);
        let scale = g.concat_rows(&[m.sp_scale, cmod.1]);
        let gate = g.concat_rows(&[m.sp_gate, cmod.2]);
        let n = g.layer_norm(x);
        let n = g.modulate(n, shift, scale, lay.spatial_groups.clone());
        let qkv = g.linear(n, pv[l.s_qkv_w], pv[l.s_qkv_b]);
        let a = g.attention(qkv, lay.spatial_seqs.clone(), self.config.num_heads);
        let o = g.linear(a, pv[l.s_out_w], pv[l.s_out_b]);
        let o = g.gate_rows(o, gate, lay.spatial_groups.clone());
        g.add(x, o)
    }

    fn temporal(&self, g: &mut Graph, pv: &[Var], li: usize, x: Var, lay: &Layout, m: &Mods) -> Var {
        let l = self.idx.layers[li];
        let n = g.layer_norm(x);
        let n = g.modulate(n, m.tm_shift, m.tm_scale, lay.point_groups.clone());
        let qkv = g.linear(n, pv[l.t_qkv_w], pv[l.t_qkv_b]);
        let a = g.attention(qkv, lay.temporal_seqs.clone(), self.config.num_heads);
        let o = g.linear(a, pv[l.t_out_w], pv[l.t_out_b]);
        let o = g.gate_rows(o, m.tm_gate, lay.update_groups.clone());
        g.add(x, o)
    }

    fn feed_forward(&self, g: &mut Graph, pv: &[Var], li: usize, x: Var, lay: &Layout, m: &Mods) -> Var {
        let l = self.idx.layers[li];
        let n = g.layer_norm(x);
        let n = g.modulate(n, m.ff_shift, m.ff_scale, lay.point_groups.clone());
        let h = g.linear(n, pv[l.ff_w1], pv[l.ff_b1]);
        let h = g.gelu(h);
        let o = g.linear(h, pv[l.ff_w2], pv[l.ff_b2]);
        let o = g.gate_rows(o, m.ff_gate, lay.update_groups.clone());
        g.add(x, o)
    }

    /// Records one denoising pass `D(noisy, t, cond)` on a fresh graph.
    /// `cond_vec` is the standardized condition (see
    /// [`standardize_condition`]).
    pub fn build(&self, noisy: &TrajArray, t: f64, cond_vec: &[f64; COND_INPUT_DIM], p0: &[Vec3]) -> Result<Forward> {
        self.check_shapes(noisy, p0)?;
        let cfg = &self.config;
        let (n, f, d) = (cfg.num_points, cfg.num_frames, cfg.latent_dim);
        let ix = &self.idx;
        let lay = Layout::new(n, f);
        let mut g = Graph::new();
        let pv = self.param_vars(&mut g);

        // Timestep and condition.
        let temb = g.input(Tensor::from_vec(1, d, sinusoidal(t, d)));
        let temb = g.linear(temb, pv[ix.t_w1], pv[ix.t_b1]);
        let temb = g.silu(temb);
        let temb = g.linear(temb, pv[ix.t_w2], pv[ix.t_b2]);
        let cond_input = g.input(Tensor::from_vec(1, COND_INPUT_DIM, cond_vec.to_vec()));
        let cond = self.cond_mlp(&mut g, &pv, cond_input);
        let ctok = g.linear(cond, pv[ix.c_proj_w], pv[ix.c_proj_b]);
        let msrc = g.add(temb, ctok);
        let msrc = g.silu(msrc);

        // Point tokens: frame 0 from the input cloud, then the noisy frames.
        let r0 = (f + 1) * n;
        let mut coords = Vec::with_capacity(r0 * 3);
        for p in p0 {
            coords.extend_from_slice(p.as_slice());
        }
        coords.extend_from_slice(&noisy.data);
        let mut pos = Tensor::zeros(r0, d);
        for fr in 0..=f {
            let fe = sinusoidal(fr as f64, d);
            for p in 0..n {
                let pe = sinusoidal(p as f64, d);
                for (k, v) in pos.row_mut(fr * n + p).iter_mut().enumerate() {
                    *v = pe[k] + fe[k];
                }
            }
        }
        let xin = g.input(Tensor::from_vec(r0, 3, coords));
        let h = g.linear(xin, pv[ix.in_w], pv[ix.in_b]);
        let pos = g.input(pos);
        let h = g.add(h, pos);
        let ctoks = g.repeat_rows(ctok, f);
        let x = g.concat_rows(&[h, ctoks]);
        let tall = g.repeat_rows(temb, lay.rows());
        let mut x = g.add(x, tall);

        for li in 0..cfg.num_layers {
            let (m, cs, cc, cg) = self.layer_mods(&mut g, &pv, li, msrc);
            x = self.spatial(&mut g, &pv, li, x, &lay, &m, (cs, cc, cg));
            x = self.temporal(&mut g, &pv, li, x, &lay, &m);
            x = self.feed_forward(&mut g, &pv, li, x, &lay, &m);
        }

        let om = g.linear(msrc, pv[ix.out_mod_w], pv[ix.out_mod_b]);
        let oshift = g.slice_cols(om, 0, d);
        let oscale = g.slice_cols(om, d, d);
        let xs = g.gather_rows(x, lay.output_rows.clone());
        let xs = g.layer_norm(xs);
        let groups = Arc::new(vec![0u32; f * n]);
        let xs = g.modulate(xs, oshift, oscale, groups);
        let offset = g.linear(xs, pv[ix.head_w], pv[ix.head_b]);
        let base: Vec<f64> = (0..f).flat_map(|_| p0.iter().flat_map(|p| [p.x, p.y, p.z])).collect();
        let base = g.input(Tensor::from_vec(f * n, 3, base));
        let output = g.add(base, offset);
        if !g.value(output).is_finite() {
            return Err(Error::NonFinite("denoiser forward pass"));
        }
        Ok(Forward { graph: g, output, cond_input, param_vars: pv })
    }

    /// Predicted clean simulated frames `D(noisy, t, cond)`.
    pub fn denoise(&self, noisy: &TrajArray, t: f64, cond: &PhysicsCondition, p0: &[Vec3]) -> Result<TrajArray> {
        let fwd = self.build(noisy, t, &standardize_condition(cond), p0)?;
        Ok(to_traj(fwd.graph.value(fwd.output), self.config.num_frames, self.config.num_points))
    }

    /// Runs only the spatial attention sublayer of `layer` on raw token rows
    /// (`(F+1) N + F` rows of width `d`) with a given modulation source.
    pub fn spatial_sublayer(&self, layer: usize, tokens: &Tensor, msrc: &Tensor) -> Result<Tensor> {
        self.sublayer(layer, tokens, msrc, true)
    }

    /// Runs only the temporal attention sublayer of `layer`.
    pub fn temporal_sublayer(&self, layer: usize, tokens: &Tensor, msrc: &Tensor) -> Result<Tensor> {
        self.sublayer(layer, tokens, msrc, false)
    }

    fn sublayer(&self, layer: usize, tokens: &Tensor, msrc: &Tensor, spatial: bool) -> Result<Tensor> {
        let cfg = &self.config;
        let lay = Layout::new(cfg.num_points, cfg.num_frames);
        if layer >= cfg.num_layers || tokens.rows != lay.rows() || tokens.cols != cfg.latent_dim || msrc.cols != cfg.latent_dim {
            return Err(Error::Shape("sublayer input does not match the model layout".into()));
        }
        let mut g = Graph::new();
        let pv = self.param_vars(&mut g);
        let ms = g.input(msrc.clone());
        let x = g.input(tokens.clone());
        let (m, cs, cc, cg) = self.layer_mods(&mut g, &pv, layer, ms);
        let y = if spatial {
            self.spatial(&mut g, &pv, layer, x, &lay, &m, (cs, cc, cg))
        } else {
            self.temporal(&mut g, &pv, layer, x, &lay, &m)
        };
        Ok(g.value(y).clone())
    }

    /// Index of the row holding point `p` of frame `f` (`f = 0` is the input
    /// cloud) in the token layout.
    pub fn token_row(&self, f: usize, p: usize) -> usize {
        f * self.config.num_points + p
    }

    /// Index of the condition token row paired with simulated frame `f`.
    pub fn cond_token_row(&self, f: usize) -> usize {
        (self.config.num_frames + 1) * self.config.num_points + f - 1
    }

    /// Total number of token rows.
    pub fn token_rows(&self) -> usize {
        Layout::new(self.config.num_points, self.config.num_frames).rows()
    }
}

pub(crate) fn to_traj(t: &Tensor, frames: usize, points: usize) -> TrajArray {
    TrajArray { frames, points, data: t.data.clone() }
}
