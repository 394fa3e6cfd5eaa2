//! Physics-grounded point-trajectory toolkit.
//!
//! This crate holds everything that does not need a neural network: the
//! domain types, an explicit APIC material point method simulator, a small
//! rigid-body backend, the dataset recipe with its on-disk trajectory format,
//! the training losses (with analytic gradients) and the evaluation metrics.
//!
//! Data-parallel loops go through [`par`], which dispatches to rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Results are
//! identical either way.

pub mod datagen;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod mpm;
pub mod par;
pub mod rigid;
pub mod rng;
pub mod spatial;
pub mod types;

pub use error::{Error, Result};
pub use rng::Rng;
pub use types::{Material, PhysicsCondition, PointCloud, TrajArray, TrajectorySequence};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Gravity magnitude used as the unit of applied force: a force of `1.0` in a
/// [`PhysicsCondition`] equals the weight of the whole object.
pub const REFERENCE_GRAVITY: f64 = 9.8;
