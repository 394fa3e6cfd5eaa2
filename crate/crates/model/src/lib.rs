//! Conditional trajectory diffusion model: a spatio-temporal transformer
//! denoiser, its training loop, a DDIM sampler and physics-parameter
//! estimation against a frozen model.

pub mod checkpoint;
pub mod error;
pub mod inverse;
pub mod network;
pub mod sample;
pub mod schedule;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
pub use network::{Model, ModelConfig, Params};
pub use schedule::NoiseSchedule;
pub use sample::ddim_sample;
pub use train::{train, StepLog, TrainConfig, TrainItem};
