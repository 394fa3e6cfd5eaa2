#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_physdyn"))
}

/// Runs the CLI and panics with its stderr on a nonzero exit.
pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn physdyn");
    assert!(out.status.success(), "physdyn {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Unit cube-ish box as an OBJ file.
pub fn write_box_obj(dir: &Path, hi: [f64; 3]) -> PathBuf {
    let mut s = String::new();
    for i in 0..8 {
        let x = if i & 1 == 0 { 0.0 } else { hi[0] };
        let y = if i & 2 == 0 { 0.0 } else { hi[1] };
        let z = if i & 4 == 0 { 0.0 } else { hi[2] };
        s.push_str(&format!("v {x} {y} {z}\n"));
    }
    // Outward-facing quads split into triangles (1-based indices).
    for f in [[1, 3, 4, 2], [5, 6, 8, 7], [1, 2, 6, 5], [3, 7, 8, 4], [1, 5, 7, 3], [2, 4, 8, 6]] {
        s.push_str(&format!("f {} {} {}\nf {} {} {}\n", f[0], f[1], f[2], f[0], f[2], f[3]));
    }
    let p = dir.join("box.obj");
    std::fs::write(&p, s).unwrap();
    p
}

/// Small, fast settings shared by the CLI tests.
pub fn small_config(dir: &Path, mesh: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "seed": 11,
        "mesh": mesh,
        "meshes": [mesh],
        "dataset": {
            "counts": { "elastic": 4 },
            "num_points": 24,
            "num_frames": 3,
            "youngs_range": [1e4, 3e4],
            "sim": { "grid_res": 16, "frame_dt": 0.02 }
        },
        "model": { "num_layers": 1, "latent_dim": 8, "num_heads": 2, "cond_token_dim": 8 },
        "train": { "learning_rate": 1e-3, "warmup_steps": 5, "loss_grid_res": 16 },
        "sample": { "steps": 4 },
        "estimate": { "iterations": 5, "num_t_samples": 4 }
    });
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

pub fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
