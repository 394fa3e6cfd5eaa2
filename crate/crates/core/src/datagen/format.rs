//! `PTRJ` trajectory files.
//!
//! Little-endian layout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `PTRJ` |
//! | 4 | version `u32` = 1 |
//! | 4 | `N` points, `u32` |
//! | 4 | `F` simulated frames, `u32` |
//! | 1 | material code `u8` (elastic 0, plasticine 1, sand 2, rigid 3) |
//! | 1 | flags `u8`; bit 0 set when deformation gradients and affines follow |
//! | 2 | padding |
//! | 44 | condition: 11 × `f32` = force (3), drag point (3), E, ν, h, frame dt, reserved |
//! | 12(F+1)N | positions, `(F + 1) × N × 3` `f32`, frame 0 first |
//! | 36FN | deformation gradients `F × N × 9` `f32`, row-major (flag only) |
//! | 36FN | affine matrices `F × N × 9` `f32`, row-major (flag only) |

use std::path::Path;

use thiserror::Error;

use crate::{Mat3, Material, PhysicsCondition, TrajectorySequence, Vec3};

pub const MAGIC: &[u8; 4] = b"PTRJ";
pub const VERSION: u32 = 1;
const FLAG_AUX: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected \"PTRJ\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported trajectory format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated in section `{section}`")]
    Truncated { section: &'static str },
    #[error("unknown material code {0}")]
    BadMaterial(u8),
    #[error("malformed trajectory: {0}")]
    Malformed(String),
}

impl FormatError {
    /// Stable machine-readable code for each failure kind.
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::BadMagic { .. } => "bad_magic",
            FormatError::UnsupportedVersion(_) => "unsupported_version",
            FormatError::Truncated { .. } => "truncated",
            FormatError::BadMaterial(_) => "bad_material",
            FormatError::Malformed(_) => "malformed",
        }
    }
}

fn push_f32(buf: &mut Vec<u8>, x: f64) {
    buf.extend_from_slice(&(x as f32).to_le_bytes());
}

fn push_mat(buf: &mut Vec<u8>, m: &Mat3) {
    for r in 0..3 {
        for c in 0..3 {
            push_f32(buf, m[(r, c)]);
        }
    }
}

/// Serialize a trajectory and its condition.
pub fn encode(traj: &TrajectorySequence, cond: &PhysicsCondition) -> Result<Vec<u8>, FormatError> {
    traj.validate().map_err(|e| FormatError::Malformed(e.to_string()))?;
    let n = traj.num_points();
    let f = traj.num_frames();
    let aux = traj.has_aux();
    let mut buf = Vec::with_capacity(64 + (f + 1) * n * 12 + if aux { 72 * f * n } else { 0 });
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(f as u32).to_le_bytes());
    buf.push(cond.material.code());
    buf.push(if aux { FLAG_AUX } else { 0 });
    buf.extend_from_slice(&[0, 0]);
    for x in cond.force.iter().chain(cond.drag_point.iter()) {
        push_f32(&mut buf, *x);
    }
    for x in [cond.youngs_modulus, cond.poisson_ratio, cond.floor_height, traj.frame_dt, 0.0] {
        push_f32(&mut buf, x);
    }
    for frame in &traj.frames {
        for p in frame {
            for x in p.iter() {
                push_f32(&mut buf, *x);
            }
        }
    }
    if let (true, Some(fs), Some(cs)) = (aux, &traj.def_grads, &traj.affines) {
        for m in fs.iter().flatten() {
            push_mat(&mut buf, m);
        }
        for m in cs.iter().flatten() {
            push_mat(&mut buf, m);
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, section: &'static str) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < len {
            return Err(FormatError::Truncated { section });
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, section: &'static str) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(count * 4, section)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Parse a trajectory file's bytes.
pub fn decode(bytes: &[u8]) -> Result<(TrajectorySequence, PhysicsCondition), FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic.to_vec() });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let n = r.u32("header")? as usize;
    let f = r.u32("header")? as usize;
    let tail = r.take(4, "header")?;
    let material = Material::from_code(tail[0]).ok_or(FormatError::BadMaterial(tail[0]))?;
    let aux = tail[1] & FLAG_AUX != 0;
    if n == 0 || f == 0 {
        return Err(FormatError::Malformed("zero points or frames".into()));
    }
    let c = r.f32s(11, "condition")?;
    let cond = PhysicsCondition {
        force: Vec3::new(c[0], c[1], c[2]),
        drag_point: Vec3::new(c[3], c[4], c[5]),
        youngs_modulus: c[6],
        poisson_ratio: c[7],
        floor_height: c[8],
        material,
    };
    let frame_dt = c[9];
    let pos = r.f32s((f + 1) * n * 3, "positions")?;
    let frames = pos
        .chunks_exact(n * 3)
        .map(|fr| fr.chunks_exact(3).map(|p| Vec3::new(p[0], p[1], p[2])).collect())
        .collect();
    let read_mats = |r: &mut Reader, section| -> Result<Vec<Vec<Mat3>>, FormatError> {
        let vals = r.f32s(f * n * 9, section)?;
        Ok(vals
            .chunks_exact(n * 9)
            .map(|fr| fr.chunks_exact(9).map(Mat3::from_row_slice).collect())
            .collect())
    };
    let (def_grads, affines) = if aux {
        (Some(read_mats(&mut r, "def_grads")?), Some(read_mats(&mut r, "affines")?))
    } else {
        (None, None)
    };
    if r.pos != bytes.len() {
        return Err(FormatError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((
        TrajectorySequence {
            frames,
            def_grads,
            affines,
            frame_dt,
        },
        cond,
    ))
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &TrajectorySequence, cond: &PhysicsCondition) -> crate::Result<()> {
    let bytes = encode(traj, cond)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>) -> crate::Result<(TrajectorySequence, PhysicsCondition)> {
    let bytes = std::fs::read(path)?;
    Ok(decode(&bytes)?)
}
