//! Empirical probability that the owner of a slot holds no red message.

use serde::{Deserialize, Serialize};

use crate::chain::{RandomStream, SteppingModel};
use crate::net::{idle_reference, scheduled_station, Mode, Network, NetworkConfig, NetworkState};

use super::LabError;

/// Warn when the red load is this close to its service capacity.
pub const CAPACITY_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleMeasurement {
    pub estimate: f64,
    /// `1 - lambda_R` with a coordinator, `1 - lambda_R / (1 - p)` without.
    pub reference: Option<f64>,
    pub slots: u64,
    pub warmup: u64,
    pub warnings: Vec<String>,
}

/// Fraction of the `slots` measured slots (after `warmup`) in which the
/// scheduled station's red queue is empty.
pub fn idle_prob_empirical(
    config: &NetworkConfig,
    slots: u64,
    warmup: u64,
    seed: u64,
) -> Result<IdleMeasurement, LabError> {
    if slots == 0 {
        return Err(LabError::InvalidArgument("slots must be positive".into()));
    }
    let net = Network::new(config.clone())?;
    let mut warnings = Vec::new();
    let capacity = match config.mode {
        Mode::Coordinator => 1.0,
        Mode::NoCoordinator => 1.0 - config.p,
    };
    if config.lambda_r >= capacity - CAPACITY_MARGIN {
        warnings.push(format!(
            "lambda_R = {} is within {CAPACITY_MARGIN} of the red capacity {capacity}; mixing is slow",
            config.lambda_r
        ));
    }
    if config.mode == Mode::NoCoordinator && !config.dummy {
        warnings.push(
            "the reference assumes every owner attempts green with probability p (dummy packets \
             or saturated green queues)"
                .into(),
        );
    }
    let mut rng = RandomStream::new(seed, 0);
    let mut state = NetworkState::empty(config.m);
    for _ in 0..warmup {
        state = net.step(&state, &mut rng)?;
    }
    let mut idle = 0u64;
    for _ in 0..slots {
        let s = scheduled_station(state.t, config.m) - 1;
        if state.r[s] == 0 {
            idle += 1;
        }
        state = net.step(&state, &mut rng)?;
    }
    Ok(IdleMeasurement {
        estimate: idle as f64 / slots as f64,
        reference: idle_reference(config),
        slots,
        warmup,
        warnings,
    })
}
