//! Exact analysis of finite Markov-modulated kernels.

pub mod certificate;
pub mod drift;
pub mod io;
pub mod kernel;
pub mod markov;
pub mod sparse;

pub use certificate::{foster_certificate, CertificateOptions, FosterCertificate};
pub use drift::{
    check_bounded_increments, multi_step_drift, sublinearity_check, verify_drift_condition,
    DriftOptions, DriftReport, Verdict,
};
pub use kernel::{CoordinateMap, Leakage, ModulatedKernel, StateSet};
pub use markov::{
    averaged_kernel, check_minorization, expected_hitting_time, hitting_time_growth,
    stationary_distribution, tv_distance_curve,
};
pub use sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not stochastic: {0}")]
    NotStochastic(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("state set is empty")]
    EmptySet,
    #[error("stationary distribution is ambiguous: {0} closed classes")]
    Ambiguous(usize),
    #[error("target set unreachable from states {0:?}")]
    InfiniteHittingTime(Vec<usize>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("truncation too small: row ({x}, {y}) leaks mass {mass:e}")]
    TruncationTooSmall { x: usize, y: usize, mass: f64 },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed kernel document: {0}")]
    Format(String),
}
