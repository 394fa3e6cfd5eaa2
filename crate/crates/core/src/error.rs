use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate point cloud: bounding box has zero extent")]
    DegenerateCloud,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mesh has zero total area")]
    ZeroArea,

    #[error("OBJ parse error at line {line}: {msg}")]
    Obj { line: usize, msg: String },

    #[error("Poisson ratio {0} outside (0, 0.5)")]
    InvalidPoisson(f64),

    #[error("non-positive deformation gradient determinant {det} (particle {particle})")]
    Inverted { particle: usize, det: f64 },

    #[error("particle {particle} left the simulation domain at frame {frame}, substep {substep}")]
    OutOfDomain {
        particle: usize,
        frame: usize,
        substep: usize,
    },

    #[error("non-finite simulation state at frame {frame}, substep {substep}")]
    NonFinite { frame: usize, substep: usize },

    #[error("time step {dt:e} violates stability bound {bound:e}")]
    Unstable { dt: f64, bound: f64 },

    #[error(transparent)]
    Format(#[from] crate::datagen::format::FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the error came from running a simulation (as opposed to bad input or I/O).
    pub fn is_simulation_failure(&self) -> bool {
        matches!(
            self,
            Error::Inverted { .. }
                | Error::OutOfDomain { .. }
                | Error::NonFinite { .. }
                | Error::Unstable { .. }
        )
    }
}
