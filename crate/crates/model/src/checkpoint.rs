//! PDMC checkpoint files.
//!
//! All integers are little-endian `u32`, all parameter values little-endian
//! `f32`:
//!
//! ```text
//! magic      4 bytes  "PDMC"
//! version    u32      1
//! config     8 x u32  num_layers, latent_dim, num_heads, cond_token_dim,
//!                     mlp_ratio, num_points, num_frames, diffusion_steps
//! count      u32      number of parameter blocks
//! block      repeated `count` times:
//!   name_len u32
//!   name     name_len bytes of UTF-8
//!   rows     u32
//!   cols     u32
//!   values   rows * cols x f32, row-major
//! ```
//!
//! Parameters are trained in f64 and rounded to f32 on save.

use std::io::{Read, Write};
use std::path::Path;

use crate::network::{Model, ModelConfig, Params};
use crate::tape::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PDMC";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let c = &model.config;
    let mut out = Vec::with_capacity(64 + model.params.num_scalars() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        c.num_layers,
        c.latent_dim,
        c.num_heads,
        c.cond_token_dim,
        c.mlp_ratio,
        c.num_points,
        c.num_frames,
        c.diffusion_steps,
    ] {
        put_u32(&mut out, v)?;
    }
    put_u32(&mut out, model.params.len())?;
    for (name, t) in model.params.names.iter().zip(&model.params.values) {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rows)?;
        put_u32(&mut out, t.cols)?;
        for v in &t.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Model> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a PDMC file".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        num_layers: r.u32("config")?,
        latent_dim: r.u32("config")?,
        num_heads: r.u32("config")?,
        cond_token_dim: r.u32("config")?,
        mlp_ratio: r.u32("config")?,
        num_points: r.u32("config")?,
        num_frames: r.u32("config")?,
        diffusion_steps: r.u32("config")?,
    };
    let count = r.u32("block count")?;
    let mut names = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32("block name")?;
        let name = std::str::from_utf8(r.take(len, "block name")?)
            .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32(&name)?;
        let cols = r.u32(&name)?;
        let bytes = r.take(rows * cols * 4, &name)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        names.push(name);
        values.push(Tensor::from_vec(rows, cols, data));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Model::from_params(config, Params { names, values })
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    let bytes = to_bytes(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let cfg = ModelConfig { num_layers: 2, latent_dim: 8, num_heads: 2, cond_token_dim: 4, num_points: 5, num_frames: 3, ..Default::default() };
        Model::new(cfg, 42).unwrap()
    }

    #[test]
    fn round_trip_rounds_to_f32() {
        let m = model();
        let back = from_bytes(&to_bytes(&m).unwrap()).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.params.names, m.params.names);
        for (a, b) in back.params.values.iter().zip(&m.params.values) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        // A second trip is exact.
        assert_eq!(to_bytes(&back).unwrap(), to_bytes(&from_bytes(&to_bytes(&back).unwrap()).unwrap()).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pdmc");
        let m = model();
        save(&p, &m).unwrap();
        assert_eq!(to_bytes(&load(&p).unwrap()).unwrap(), to_bytes(&m).unwrap());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = to_bytes(&model()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(m)) if m.contains("truncated")));
        let mut long = bytes;
        long.push(0);
        assert!(from_bytes(&long).is_err());
    }
}
