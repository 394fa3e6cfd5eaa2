//! Point-cloud utilities: domain normalization, farthest point sampling and
//! sampling points from triangle meshes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::bounds;
use crate::{Error, PointCloud, Result, Rng, Vec3};

/// Isotropic scale followed by a translation: `x' = scale * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainTransform {
    pub scale: f64,
    pub translation: Vec3,
}

impl DomainTransform {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.translation
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        (p - self.translation) / self.scale
    }
}

/// Map `points` into `[margin, 1 - margin]^3` with an isotropic scale, centred
/// in the unit cube. The largest bounding-box extent fills the margin box.
pub fn normalize_to_domain(
    points: &PointCloud,
    margin: f64,
) -> Result<(PointCloud, DomainTransform)> {
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::invalid(format!("margin {margin} outside [0, 0.5)")));
    }
    let (lo, hi) = points.bounds();
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(Error::DegenerateCloud);
    }
    let scale = (1.0 - 2.0 * margin) / extent;
    let center = (lo + hi) * 0.5;
    let translation = Vec3::repeat(0.5) - center * scale;
    let t = DomainTransform { scale, translation };
    let positions = points.positions.iter().map(|p| t.apply(p)).collect();
    Ok((PointCloud { positions }, t))
}

/// Greedy farthest point sampling seeded at `start_index`. Ties go to the
/// lowest index. Returns the selected points in selection order.
pub fn farthest_point_sample(points: &PointCloud, k: usize, start_index: usize) -> Result<PointCloud> {
    let idx = farthest_point_indices(&points.positions, k, start_index)?;
    Ok(PointCloud {
        positions: idx.into_iter().map(|i| points.positions[i]).collect(),
    })
}

/// Index form of [`farthest_point_sample`].
pub fn farthest_point_indices(points: &[Vec3], k: usize, start_index: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot select {k} of {n} points")));
    }
    if start_index >= n {
        return Err(Error::invalid(format!("start index {start_index} out of range")));
    }
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut selected = Vec::with_capacity(k);
    let mut current = start_index;
    for _ in 0..k {
        selected.push(current);
        let c = points[current];
        min_d2[current] = f64::NEG_INFINITY;
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = &mut min_d2[i];
            if *d == f64::NEG_INFINITY {
                continue;
            }
            let d2 = (p - c).norm_squared();
            if d2 < *d {
                *d = d2;
            }
            if *d > best_d {
                best_d = *d;
                best = i;
            }
        }
        if best == usize::MAX {
            break;
        }
        current = best;
    }
    Ok(selected)
}

/// Triangle mesh with 0-based face indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Parse `v` and `f` records of an ASCII OBJ file. Other records are
    /// ignored; faces must be triangles. Face entries may use the
    /// `v/vt/vn` form (only the vertex index is read) and negative indices.
    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            let mut toks = content.split_whitespace();
            match toks.next() {
                Some("v") => {
                    let coords: Vec<f64> = toks
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Obj {
                            line,
                            msg: format!("bad vertex coordinate: {e}"),
                        })?;
                    if coords.len() != 3 {
                        return Err(Error::Obj {
                            line,
                            msg: "vertex needs three coordinates".into(),
                        });
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let refs: Vec<&str> = toks.collect();
                    if refs.len() != 3 {
                        return Err(Error::Obj {
                            line,
                            msg: format!("only triangular faces are supported, got {} vertices", refs.len()),
                        });
                    }
                    let mut face = [0usize; 3];
                    for (slot, r) in face.iter_mut().zip(&refs) {
                        let head = r.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| Error::Obj {
                            line,
                            msg: format!("bad face index `{r}`"),
                        })?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            -1
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(Error::Obj {
                                line,
                                msg: format!("face index {i} out of range"),
                            });
                        }
                        *slot = resolved as usize;
                    }
                    faces.push(face);
                }
                _ => {}
            }
        }
        if faces.is_empty() {
            return Err(Error::Obj {
                line: 0,
                msg: "no faces".into(),
            });
        }
        Ok(Self { vertices, faces })
    }

    pub fn read_obj(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_obj(&text)
    }

    /// Axis-aligned box as 12 triangles.
    pub fn cuboid(lo: Vec3, hi: Vec3) -> Self {
        let v = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { lo.x } else { hi.x },
                if y == 0 { lo.y } else { hi.y },
                if z == 0 { lo.z } else { hi.z },
            )
        };
        let vertices = vec![
            v(0, 0, 0),
            v(1, 0, 0),
            v(1, 1, 0),
            v(0, 1, 0),
            v(0, 0, 1),
            v(1, 0, 1),
            v(1, 1, 1),
            v(0, 1, 1),
        ];
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [3, 6, 2],
            [3, 7, 6],
            [0, 4, 7],
            [0, 7, 3],
            [1, 2, 6],
            [1, 6, 5],
        ];
        Self { vertices, faces }
    }
}

/// Area-weighted uniform samples on the mesh surface.
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::ZeroArea);
    }
    let positions = (0..n)
        .map(|_| {
            let u = rng.uniform() * acc;
            let f = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let r1 = rng.uniform().sqrt();
            let r2 = rng.uniform();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    Ok(PointCloud { positions })
}

/// Uniform samples inside a closed mesh by rejection from its bounding box,
/// using ray-crossing parity along `+x`.
pub fn sample_volume_points(mesh: &TriangleMesh, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if !(mesh.total_area() > 0.0) {
        return Err(Error::ZeroArea);
    }
    let (lo, hi) = bounds(&mesh.vertices);
    let ext = hi - lo;
    let mut positions = Vec::with_capacity(n);
    let max_tries = 1000 * n.max(100);
    let mut tries = 0;
    while positions.len() < n {
        tries += 1;
        if tries > max_tries {
            return Err(Error::invalid("mesh does not enclose a volume"));
        }
        let p = lo + Vec3::new(rng.uniform() * ext.x, rng.uniform() * ext.y, rng.uniform() * ext.z);
        if point_inside(mesh, &p) {
            positions.push(p);
        }
    }
    Ok(PointCloud { positions })
}

fn point_inside(mesh: &TriangleMesh, p: &Vec3) -> bool {
    let mut crossings = 0usize;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(f);
        // Project onto the yz plane and test whether the +x ray hits.
        let (ay, az) = (a.y - p.y, a.z - p.z);
        let (by, bz) = (b.y - p.y, b.z - p.z);
        let (cy, cz) = (c.y - p.y, c.z - p.z);
        let e0 = ay * bz - az * by;
        let e1 = by * cz - bz * cy;
        let e2 = cy * az - cz * ay;
        let inside = (e0 > 0.0 && e1 > 0.0 && e2 > 0.0) || (e0 < 0.0 && e1 < 0.0 && e2 < 0.0);
        if !inside {
            continue;
        }
        let s = e0 + e1 + e2;
        let x = (e1 * a.x + e2 * b.x + e0 * c.x) / s;
        if x > p.x {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}
