//! Stability analysis and simulation of Markov-modulated chains and of the
//! two-class random-access network built on them.
//!
//! * [`chain`]: seeded random streams and the stepping-model interface.
//! * [`analysis`]: exact computations on finite modulated kernels.
//! * [`regen`]: split chains, regeneration and coupling estimates.
//! * [`net`]: the slotted network simulator and its truncated kernel.
//! * [`lab`]: stability classification, boundary search and reports.

pub mod analysis;
pub mod chain;
pub mod fsutil;
pub mod lab;
pub mod net;
pub mod regen;
