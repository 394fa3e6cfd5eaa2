//! ASCII PLY point-cloud export.

use std::io::Write;
use std::path::{Path, PathBuf};

use physdyn_core::{TrajectorySequence, Vec3};

pub fn write_points(path: &Path, points: &[Vec3]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "ply")?;
    writeln!(f, "format ascii 1.0")?;
    writeln!(f, "element vertex {}", points.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(f, "property float {axis}")?;
    }
    writeln!(f, "end_header")?;
    for p in points {
        writeln!(f, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
    }
    f.flush()
}

/// One file per frame, `frame_000.ply` first. Returns the written paths.
pub fn write_sequence(dir: &Path, traj: &TrajectorySequence) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    traj.frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let p = dir.join(format!("frame_{i:03}.ply"));
            write_points(&p, frame).map(|_| p)
        })
        .collect()
}
