use serde::{Deserialize, Serialize};

use crate::{Error, Mat3, Result, Vec3};

/// An object as `N` points in normalized domain coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("point cloud contains non-finite coordinates"));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        self.positions.iter().sum::<Vec3>() / self.positions.len() as f64
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        bounds(&self.positions)
    }
}

pub(crate) fn bounds(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Elastic,
    Plasticine,
    Sand,
    Rigid,
}

impl Material {
    pub const ALL: [Material; 4] = [
        Material::Elastic,
        Material::Plasticine,
        Material::Sand,
        Material::Rigid,
    ];

    pub fn code(self) -> u8 {
        match self {
            Material::Elastic => 0,
            Material::Plasticine => 1,
            Material::Sand => 2,
            Material::Rigid => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Whether trajectories of this material come from the MPM simulator
    /// (and therefore carry deformation gradients and affine matrices).
    pub fn is_mpm(self) -> bool {
        self != Material::Rigid
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self.code() as usize] = 1.0;
        v
    }
}

impl std::fmt::Display for Material {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Material::Elastic => "elastic",
            Material::Plasticine => "plasticine",
            Material::Sand => "sand",
            Material::Rigid => "rigid",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elastic" => Ok(Material::Elastic),
            "plasticine" => Ok(Material::Plasticine),
            "sand" => Ok(Material::Sand),
            "rigid" => Ok(Material::Rigid),
            other => Err(Error::invalid(format!("unknown material `{other}`"))),
        }
    }
}

/// The conditioning vector of a trajectory: applied force, where it is
/// applied, material parameters and the floor.
///
/// `force` is expressed in units of the object's total weight (see
/// [`crate::REFERENCE_GRAVITY`]); all positions are in normalized domain
/// units and the vertical axis is `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsCondition {
    pub force: Vec3,
    pub drag_point: Vec3,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub floor_height: f64,
    pub material: Material,
}

impl PhysicsCondition {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(Error::invalid(format!(
                "Young's modulus must be positive, got {}",
                self.youngs_modulus
            )));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::InvalidPoisson(self.poisson_ratio));
        }
        if !(0.0..=1.0).contains(&self.floor_height) {
            return Err(Error::invalid(format!(
                "floor height {} outside [0, 1]",
                self.floor_height
            )));
        }
        if !self.force.iter().chain(self.drag_point.iter()).all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite force or drag point"));
        }
        Ok(())
    }
}

/// `F + 1` frames of `N` corresponding points. `frames[0]` is the input
/// cloud; the `F` simulated frames follow. Ground-truth deformation gradients
/// and APIC affine matrices, when present, are stored for frames `1..=F`
/// (index `f - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySequence {
    pub frames: Vec<Vec<Vec3>>,
    pub def_grads: Option<Vec<Vec<Mat3>>>,
    pub affines: Option<Vec<Vec<Mat3>>>,
    pub frame_dt: f64,
}

impl TrajectorySequence {
    /// Number of simulated frames `F` (excluding the initial frame).
    pub fn num_frames(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn num_points(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    pub fn initial(&self) -> &[Vec3] {
        &self.frames[0]
    }

    pub fn has_aux(&self) -> bool {
        self.def_grads.is_some() && self.affines.is_some()
    }

    /// Check frame counts and per-frame point counts agree.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_points();
        let f = self.num_frames();
        if n == 0 || f == 0 {
            return Err(Error::ShapeMismatch(
                "trajectory needs at least one point and one simulated frame".into(),
            ));
        }
        if self.frames.iter().any(|fr| fr.len() != n) {
            return Err(Error::ShapeMismatch("frames have differing point counts".into()));
        }
        for aux in [&self.def_grads, &self.affines].into_iter().flatten() {
            if aux.len() != f || aux.iter().any(|fr| fr.len() != n) {
                return Err(Error::ShapeMismatch(
                    "auxiliary matrices do not match F x N".into(),
                ));
            }
        }
        Ok(())
    }

    /// The simulated frames `1..=F` as a flat array.
    pub fn to_array(&self) -> TrajArray {
        TrajArray::from_frames(&self.frames[1..])
    }

    /// All `F + 1` frames as a flat array.
    pub fn to_array_with_initial(&self) -> TrajArray {
        TrajArray::from_frames(&self.frames)
    }
}

/// Dense `frames x points x 3` array, frame-major. The layout used by the
/// losses and the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajArray {
    pub frames: usize,
    pub points: usize,
    pub data: Vec<f64>,
}

impl TrajArray {
    pub fn zeros(frames: usize, points: usize) -> Self {
        Self {
            frames,
            points,
            data: vec![0.0; frames * points * 3],
        }
    }

    pub fn from_vec(frames: usize, points: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * points * 3 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for {frames} x {points} x 3, got {}",
                frames * points * 3,
                data.len()
            )));
        }
        Ok(Self {
            frames,
            points,
            data,
        })
    }

    pub fn from_frames(frames: &[Vec<Vec3>]) -> Self {
        let points = frames.first().map_or(0, |f| f.len());
        let mut data = Vec::with_capacity(frames.len() * points * 3);
        for fr in frames {
            for p in fr {
                data.extend_from_slice(p.as_slice());
            }
        }
        Self {
            frames: frames.len(),
            points,
            data,
        }
    }

    pub fn to_frames(&self) -> Vec<Vec<Vec3>> {
        (0..self.frames)
            .map(|f| (0..self.points).map(|p| self.point(f, p)).collect())
            .collect()
    }

    #[inline]
    pub fn offset(&self, frame: usize, point: usize) -> usize {
        (frame * self.points + point) * 3
    }

    #[inline]
    pub fn point(&self, frame: usize, point: usize) -> Vec3 {
        let o = self.offset(frame, point);
        Vec3::new(self.data[o], self.data[o + 1], self.data[o + 2])
    }

    pub fn frame(&self, frame: usize) -> Vec<Vec3> {
        (0..self.points).map(|p| self.point(frame, p)).collect()
    }

    pub fn same_shape(&self, other: &TrajArray) -> bool {
        self.frames == other.frames && self.points == other.points
    }

    /// Prepend a frame (typically the input cloud), returning `frames + 1` frames.
    pub fn with_leading_frame(&self, first: &[Vec3]) -> Result<TrajArray> {
        if first.len() != self.points {
            return Err(Error::ShapeMismatch(format!(
                "leading frame has {} points, array has {}",
                first.len(),
                self.points
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + self.points * 3);
        for p in first {
            data.extend_from_slice(p.as_slice());
        }
        data.extend_from_slice(&self.data);
        Ok(TrajArray {
            frames: self.frames + 1,
            points: self.points,
            data,
        })
    }
}
