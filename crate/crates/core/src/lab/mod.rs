//! Simulation experiments: stability classification, boundary search,
//! idle-slot measurements and reports.

pub mod boundary;
pub mod classify;
pub mod idle;
pub mod report;

pub use boundary::{boundary_bisection, BoundaryEstimate};
pub use classify::{classify_stability, ClassifyOptions, Label, StabilityVerdict};
pub use idle::{idle_prob_empirical, IdleMeasurement};
pub use report::{emit_report, merge_tables, sweep, SweepRow};

use crate::chain::ChainError;
use crate::net::NetError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bracket rejected: {0}")]
    Bracket(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}
