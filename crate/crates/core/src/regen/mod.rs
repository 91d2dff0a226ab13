//! Regeneration and coupling for chains with a minorized set.

pub mod coupling;
pub mod idle;
pub mod split;

pub use coupling::{estimate_coupling_tail, CouplingReport};
pub use idle::{idle_probability_check, IdleReport, IncrementLaw};
pub use split::{
    build_split_kernel, build_split_kernel_with_mass, simulate_regenerations, RegenerationSample,
    SplitKernel,
};

use crate::analysis::AnalysisError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegenError {
    #[error("no minorization: the rows over V share no mass")]
    NoMinorization,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}
