//! Uniform-grid index for nearest-neighbour queries on point sets.

use crate::types::bounds;
use crate::Vec3;

pub struct GridIndex<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> GridIndex<'a> {
    /// Build an index with roughly `per_cell` points per occupied cell.
    pub fn new(points: &'a [Vec3], per_cell: f64) -> Self {
        assert!(!points.is_empty(), "cannot index an empty point set");
        let (lo, hi) = bounds(points);
        let ext = hi - lo;
        let vol = ext.iter().map(|e| e.max(1e-9)).product::<f64>();
        let mut cell = (vol * per_cell / points.len() as f64).cbrt();
        let max_ext = ext.max();
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        // Cap the grid at 128 cells per axis.
        cell = cell.max(max_ext / 128.0).max(1e-12);
        let dims = [
            (ext.x / cell) as usize + 1,
            (ext.y / cell) as usize + 1,
            (ext.z / cell) as usize + 1,
        ];
        let ncell = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncell + 1];
        let mut keys = Vec::with_capacity(points.len());
        let tmp = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            items: Vec::new(),
        };
        for p in points {
            let k = tmp.flat(tmp.cell_of(p));
            keys.push(k);
            counts[k + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        Self {
            starts: counts,
            items,
            ..tmp
        }
    }

    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        let r = (p - self.origin) / self.cell;
        [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        let cx = c[0].clamp(0, self.dims[0] as i64 - 1) as usize;
        let cy = c[1].clamp(0, self.dims[1] as i64 - 1) as usize;
        let cz = c[2].clamp(0, self.dims[2] as i64 - 1) as usize;
        (cx * self.dims[1] + cy) * self.dims[2] + cz
    }

    fn visit_ring(&self, center: [i64; 3], r: i64, mut f: impl FnMut(usize)) {
        let d = [self.dims[0] as i64, self.dims[1] as i64, self.dims[2] as i64];
        for x in center[0] - r..=center[0] + r {
            if x < 0 || x >= d[0] {
                continue;
            }
            for y in center[1] - r..=center[1] + r {
                if y < 0 || y >= d[1] {
                    continue;
                }
                let on_shell_xy = (x - center[0]).abs() == r || (y - center[1]).abs() == r;
                let zs: Box<dyn Iterator<Item = i64>> = if on_shell_xy {
                    Box::new(center[2] - r..=center[2] + r)
                } else {
                    Box::new([center[2] - r, center[2] + r].into_iter())
                };
                for z in zs {
                    if z < 0 || z >= d[2] {
                        continue;
                    }
                    if r == 0 && z != center[2] {
                        continue;
                    }
                    let k = ((x as usize) * self.dims[1] + y as usize) * self.dims[2] + z as usize;
                    for &i in &self.items[self.starts[k]..self.starts[k + 1]] {
                        f(i);
                    }
                }
            }
        }
    }

    /// The `k` nearest points to `q` as `(index, squared distance)`, sorted by
    /// distance then index.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        let raw = self.cell_of(q);
        let center = [
            raw[0].clamp(0, self.dims[0] as i64 - 1),
            raw[1].clamp(0, self.dims[1] as i64 - 1),
            raw[2].clamp(0, self.dims[2] as i64 - 1),
        ];
        // Distance from q to its clamped cell, so the ring bound stays valid
        // for queries outside the indexed box.
        let cell_lo = self.origin + Vec3::new(center[0] as f64, center[1] as f64, center[2] as f64) * self.cell;
        let outside = (cell_lo - q).sup(&Vec3::zeros()) + (q - (cell_lo + Vec3::repeat(self.cell))).sup(&Vec3::zeros());
        let offset = outside.norm();
        let max_r = *self.dims.iter().max().unwrap() as i64;
        for r in 0..=max_r {
            self.visit_ring(center, r, |i| {
                let d2 = (self.points[i] - q).norm_squared();
                if best.len() < k || (d2, i) < (best[k - 1].1, best[k - 1].0) {
                    let pos = best.partition_point(|&(j, e)| (e, j) < (d2, i));
                    best.insert(pos, (i, d2));
                    best.truncate(k);
                }
            });
            if best.len() == k {
                let reach = (r as f64 * self.cell - offset).max(0.0);
                if best[k - 1].1 <= reach * reach {
                    break;
                }
            }
        }
        best
    }

    /// Squared distance to the nearest indexed point.
    pub fn nearest_d2(&self, q: &Vec3) -> f64 {
        self.knn(q, 1)[0].1
    }
}
