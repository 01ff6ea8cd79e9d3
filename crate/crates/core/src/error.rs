//! Error type shared by all estimation modules.

use thiserror::Error;

/// Errors produced by model construction, simulation, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// A delay falls outside the unambiguous range `[0, N*T_s)`.
    #[error("delay[{index}] = {value_s:.6e} s outside unambiguous range [0, {max_s:.6e} s)")]
    DelayOutOfRange {
        index: usize,
        value_s: f64,
        max_s: f64,
    },

    /// Invalid argument or inconsistent dimensions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A deconvolution divisor is too close to zero to invert.
    #[error(
        "ill-conditioned probe: |s*g| = {magnitude:.3e} < 1e-6 at band {band}, subcarrier {subcarrier}"
    )]
    IllConditionedProbe {
        band: usize,
        subcarrier: usize,
        magnitude: f64,
    },

    /// Observed data does not carry the requested signal rank.
    #[error("degenerate data: sigma_{k}/sigma_1 = {ratio:.3e} below rank threshold")]
    DegenerateData { k: usize, ratio: f64 },

    /// The steering manifold lost column rank (coinciding delays).
    #[error("singular manifold: delay parameters too close to separate (min |R_kk|/max = {ratio:.3e})")]
    SingularManifold { ratio: f64 },

    /// The multiresolution initializer could not produce usable delays.
    #[error("initializer failed: {0}")]
    InitializerFailed(String),

    /// Fewer pseudospectrum peaks than paths requested.
    #[error("peak deficit: found {found} spectrum peaks above the median level, need {need}")]
    PeakDeficit { found: usize, need: usize },

    /// Fisher information matrix is singular or indefinite.
    #[error("singular Fisher information matrix")]
    SingularInformation,

    /// An iterative decomposition failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
