//! Per-frame comparison metrics between predicted and reference clouds.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::spatial::GridIndex;
use crate::types::bounds;
use crate::{par, Error, Result, TrajArray, Vec3};

pub const DEFAULT_VIOU_RESOLUTION: usize = 32;

fn nonempty(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("metric needs nonempty clouds"));
    }
    Ok(())
}

/// Voxel IoU. Both clouds are voxelized with cubic voxels over their joint
/// bounding box expanded by 5%, with `resolution` voxels along the longest
/// side.
pub fn viou(pred: &[Vec3], gt: &[Vec3], resolution: usize) -> Result<f64> {
    nonempty(pred, gt)?;
    if resolution < 2 {
        return Err(Error::invalid(format!("vIoU resolution must be at least 2, got {resolution}")));
    }
    let (lo_a, hi_a) = bounds(pred);
    let (lo_b, hi_b) = bounds(gt);
    let lo = lo_a.inf(&lo_b);
    let hi = hi_a.sup(&hi_b);
    let center = (lo + hi) * 0.5;
    let mut extent = (hi - lo).max() * 1.05;
    if !(extent > 0.0) {
        extent = 1.0;
    }
    let voxel = extent / resolution as f64;
    let origin = center - Vec3::repeat(extent * 0.5);
    let cell = |p: &Vec3| {
        let r = resolution as i64 - 1;
        let c = (p - origin) / voxel;
        [0, 1, 2].map(|d| (c[d].floor() as i64).clamp(0, r))
    };
    let a: HashSet<[i64; 3]> = pred.iter().map(cell).collect();
    let b: HashSet<[i64; 3]> = gt.iter().map(cell).collect();
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

fn mean_nn(from: &[Vec3], to: &[Vec3]) -> f64 {
    let index = GridIndex::new(to, 2.0);
    let d = par::map_slice(from, |p| index.nearest_d2(p).sqrt());
    d.iter().sum::<f64>() / from.len() as f64
}

/// Symmetric Chamfer distance: the average of the two directed mean
/// nearest-neighbour distances.
pub fn chamfer(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    nonempty(pred, gt)?;
    Ok(0.5 * (mean_nn(pred, gt) + mean_nn(gt, pred)))
}

/// Mean distance between corresponding points.
pub fn corr_l2(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    nonempty(pred, gt)?;
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} points", pred.len(), gt.len())));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).norm()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub viou: f64,
    pub chamfer: f64,
    pub l2: f64,
}

/// Metrics computed frame by frame and averaged over frames.
pub fn evaluate_sequence(pred: &TrajArray, gt: &TrajArray, resolution: usize) -> Result<SequenceMetrics> {
    if !pred.same_shape(gt) {
        return Err(Error::ShapeMismatch(format!(
            "pred {}x{} vs gt {}x{}",
            pred.frames, pred.points, gt.frames, gt.points
        )));
    }
    if pred.frames == 0 {
        return Err(Error::invalid("sequence has no frames"));
    }
    let per = par::map_range(pred.frames, |f| {
        let (a, b) = (pred.frame(f), gt.frame(f));
        Ok::<_, Error>([viou(&a, &b, resolution)?, chamfer(&a, &b)?, corr_l2(&a, &b)?])
    });
    let mut acc = [0.0; 3];
    for r in per {
        let r = r?;
        for k in 0..3 {
            acc[k] += r[k];
        }
    }
    let n = pred.frames as f64;
    Ok(SequenceMetrics { viou: acc[0] / n, chamfer: acc[1] / n, l2: acc[2] / n })
}
