use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The upper layer thickness (or the thickness ratio) is not positive.
    #[error("degenerate layer: {0}")]
    DegenerateLayer(String),

    #[error("outside the regime of validity: {0}")]
    OutOfRegime(String),

    #[error("spectrum is not real: max |Im| = {max_imag:e}")]
    NonRealSpectrum { max_imag: f64 },

    #[error("closed-form eigenvector for {0} collapses to zero")]
    DegenerateEigenvector(String),

    #[error("eigenvalue tracking failed for {0}")]
    EigenTrackingFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
