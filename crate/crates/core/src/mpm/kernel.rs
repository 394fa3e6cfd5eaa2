//! Quadratic B-spline interpolation kernel on a uniform grid.

use crate::{Mat3, Vec3};

/// 1-D weights, first and second derivatives (with respect to the particle
/// coordinate, in world units) for the three nodes `base..base + 3`.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub base: i64,
    pub w: [f64; 3],
    pub dw: [f64; 3],
    pub ddw: [f64; 3],
}

pub fn axis(x: f64, inv_dx: f64) -> Axis {
    let s = x * inv_dx;
    let base = (s - 0.5).floor();
    let fx = s - base;
    let w = [
        0.5 * (1.5 - fx) * (1.5 - fx),
        0.75 - (fx - 1.0) * (fx - 1.0),
        0.5 * (fx - 0.5) * (fx - 0.5),
    ];
    let dw = [(fx - 1.5) * inv_dx, -2.0 * (fx - 1.0) * inv_dx, (fx - 0.5) * inv_dx];
    let h = inv_dx * inv_dx;
    Axis {
        base: base as i64,
        w,
        dw,
        ddw: [h, -2.0 * h, h],
    }
}

/// The 27-node stencil of a particle.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub axes: [Axis; 3],
}

/// One node of a stencil.
#[derive(Debug, Clone, Copy)]
pub struct NodeWeight {
    /// Integer node coordinates.
    pub node: [i64; 3],
    pub w: f64,
    /// Gradient of the weight with respect to the particle position.
    pub grad: Vec3,
}

impl Stencil {
    pub fn new(x: &Vec3, inv_dx: f64) -> Self {
        Self {
            axes: [axis(x.x, inv_dx), axis(x.y, inv_dx), axis(x.z, inv_dx)],
        }
    }

    pub fn base(&self) -> [i64; 3] {
        [self.axes[0].base, self.axes[1].base, self.axes[2].base]
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeWeight> + '_ {
        let [ax, ay, az] = &self.axes;
        (0..27).map(move |n| {
            let (i, j, k) = (n / 9, (n / 3) % 3, n % 3);
            NodeWeight {
                node: [ax.base + i as i64, ay.base + j as i64, az.base + k as i64],
                w: ax.w[i] * ay.w[j] * az.w[k],
                grad: Vec3::new(
                    ax.dw[i] * ay.w[j] * az.w[k],
                    ax.w[i] * ay.dw[j] * az.w[k],
                    ax.w[i] * ay.w[j] * az.dw[k],
                ),
            }
        })
    }

    /// Hessian of the weight of stencil node `n` (0..27, same order as
    /// [`Stencil::iter`]) with respect to the particle position.
    pub fn hessian(&self, n: usize) -> Mat3 {
        let [ax, ay, az] = &self.axes;
        let (i, j, k) = (n / 9, (n / 3) % 3, n % 3);
        let (wx, wy, wz) = (ax.w[i], ay.w[j], az.w[k]);
        let (dx, dy, dz) = (ax.dw[i], ay.dw[j], az.dw[k]);
        let (hx, hy, hz) = (ax.ddw[i], ay.ddw[j], az.ddw[k]);
        Mat3::new(
            hx * wy * wz,
            dx * dy * wz,
            dx * wy * dz,
            dx * dy * wz,
            wx * hy * wz,
            wx * dy * dz,
            dx * wy * dz,
            wx * dy * dz,
            wx * wy * hz,
        )
    }
}
