//! Explicit material point method with APIC transfers and a quadratic
//! B-spline kernel.

pub mod constitutive;
pub mod grid;
pub mod kernel;
pub mod simulate;

pub use constitutive::{first_piola_stress, fixed_corotated_energy, lame_params, plastic_project, polar_rotation, PlasticParams};
pub use kernel::{NodeWeight, Stencil};
pub use grid::{g2p, grid_update, p2g, Boundary, Constitutive, Floor, Grid, Particle};
pub use simulate::{estimate_volume, force_region, object_mass, simulate, SimConfig, Simulation};
