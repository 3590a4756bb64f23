//! Simulation and numerical-oracle toolkit for the one-dimensional exclusion
//! process with long jumps.
//!
//! The crate has two halves that check each other:
//!
//! * an exact event-driven simulator of the exclusion process on a periodic
//!   ring ([`simulator`]), with evaluators for the density fluctuation field,
//!   drift field, quadratic variation, block averages, mollified energy field
//!   and occupation time ([`fields`]);
//! * numerical realizations of the limiting objects: the discrete and
//!   continuous fractional generators and Dirichlet forms ([`generator`]),
//!   the Fourier symbol / semigroup / Ornstein-Uhlenbeck covariance oracle
//!   ([`symbol`]), the interval spectral gap ([`spectral`]) and the stable
//!   law of the centered scaled random walk ([`stablewalk`]).
//!
//! [`stats`] carries the statistical machinery (KS tests, moment summaries,
//! log-log scaling fits) used to compare the two halves.

pub mod fields;
pub mod generator;
pub mod kernel;
pub mod probe;
pub mod quad;
pub mod simulator;
pub mod spectral;
pub mod stablewalk;
pub mod stats;
pub mod sums;
pub mod symbol;

/// Errors surfaced by the numerical and simulation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("operation requires alpha > 1, got alpha = {0}")]
    InvalidRegime(f64),
    #[error("truncation tolerance unattainable: {0}")]
    Truncation(String),
    #[error("quadrature did not reach target accuracy: {0}")]
    Quadrature(String),
    #[error("symbol positivity violated: max Re psi = {0:.3e}")]
    SymbolPositivity(f64),
    #[error("grid aliasing: boundary magnitude {boundary:.3e} exceeds {tol:.3e} of peak")]
    Aliasing { boundary: f64, tol: f64 },
    #[error("observation window of {window} sites exceeds half the ring (N = {ring})")]
    WindowOverflow { window: usize, ring: usize },
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("numerically degenerate spectrum: second eigenvalue {0:.3e}")]
    DegenerateSpectrum(f64),
    #[error("{0}")]
    Stats(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Deterministic RNG used for simulation streams.
///
/// Replicate r of an experiment draws from `SimRng::seed_from_u64(base ^ r)`;
/// the stream is stable across platforms.
pub type SimRng = rand_pcg::Pcg64Mcg;
