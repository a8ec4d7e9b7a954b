use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input failed a precondition (non-Hermitian operator, bad parameter, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The coupling norm dropped below the gap floor, closing the gap
    /// between the dark subspace and the bright states.
    #[error("gap closes at phi = ({:.6}, {:.6}): Omega = {omega:.3e} below floor {floor:.1e}", .phi[0], .phi[1])]
    GapViolation { phi: [f64; 2], omega: f64, floor: f64 },

    /// Spectral clusters differ between the two stencil points of a derivative.
    #[error("cluster structure changes near phi: {0}")]
    ClusterChange(String),

    #[error("time step too large: dt * scale = {product:.3e} (must stay below {limit})")]
    Stability { product: f64, limit: f64 },

    #[error("trajectory {index} (phi0 = ({:.6}, {:.6})) failed: {source}", .phi0[0], .phi0[1])]
    Trajectory {
        index: usize,
        phi0: [f64; 2],
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
