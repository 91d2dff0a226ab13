//! Slot-exact simulation.
//!
//! Draw order within a slot, all from the trajectory's stream:
//! 1. red batch size, then its split over stations (one multinomial);
//! 2. green batch size, then its split;
//! 3. transmission decisions `alpha_i ~ Bernoulli(p)` for `i = 1..M`.
//!
//! Transmissions are resolved on the pre-slot queues and the arrivals are
//! added afterwards, so a message cannot leave in the slot it arrives.

use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainError, RandomStream, SteppingModel};

use super::{ArrivalLaw, Mode, NetError, NetworkConfig, NetworkState};

/// Random inputs of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotDraws {
    pub red: Vec<u64>,
    pub green: Vec<u64>,
    pub alpha: Vec<bool>,
}

fn batch(law: ArrivalLaw, rate: f64, rng: &mut RandomStream) -> u64 {
    match law {
        ArrivalLaw::Bernoulli => rng.bernoulli(rate) as u64,
        ArrivalLaw::Poisson if rate > 0.0 => {
            Poisson::new(rate).expect("rate validated").sample(rng) as u64
        }
        ArrivalLaw::Poisson => 0,
    }
}

/// Uniform multinomial split by sequential binomials.
fn split(total: u64, m: usize, rng: &mut RandomStream) -> Vec<u64> {
    let mut out = vec![0; m];
    let mut left = total;
    for (i, slot) in out.iter_mut().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == m {
            *slot = left;
            break;
        }
        let share = 1.0 / (m - i) as f64;
        let k = Binomial::new(left, share).expect("valid share").sample(rng);
        *slot = k;
        left -= k;
    }
    out
}

impl SlotDraws {
    pub fn sample(config: &NetworkConfig, rng: &mut RandomStream) -> Self {
        let m = config.m;
        let nr = batch(config.arrival_law, config.lambda_r, rng);
        let red = split(nr, m, rng);
        let ng = batch(config.arrival_law, config.lambda_g, rng);
        let green = split(ng, m, rng);
        let alpha = (0..m).map(|_| rng.bernoulli(config.p)).collect();
        Self { red, green, alpha }
    }

    pub fn none(m: usize) -> Self {
        Self {
            red: vec![0; m],
            green: vec![0; m],
            alpha: vec![false; m],
        }
    }
}

/// Transmissions resolved in one slot (0-based station indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub red_success: Option<usize>,
    pub green_success: Option<usize>,
    pub red_collision: bool,
}

/// Applies one slot with the given draws.
pub fn apply(
    config: &NetworkConfig,
    state: &NetworkState,
    draws: &SlotDraws,
) -> (NetworkState, SlotOutcome) {
    let m = config.m;
    let s = ((state.t - 1) % m as u64) as usize;
    let red_waiting = state.r[s] > 0;
    // Stations that put a green (or dummy) packet on the channel. With a
    // coordinator, a station sending red never attempts green.
    let attempts = |j: usize| {
        draws.alpha[j]
            && (config.dummy || state.g[j] > 0)
            && !(config.mode == Mode::Coordinator && j == s && red_waiting)
    };
    let mut attempters = (0..m).filter(|&j| attempts(j));
    let first = attempters.next();
    let unique = first.filter(|_| attempters.next().is_none());
    let owner_attempts = attempts(s);

    let mut out = SlotOutcome::default();
    if red_waiting {
        match config.mode {
            Mode::Coordinator => out.red_success = Some(s),
            Mode::NoCoordinator if owner_attempts => out.red_collision = true,
            Mode::NoCoordinator => out.red_success = Some(s),
        }
    }
    if let Some(j) = unique {
        let blocked = config.mode == Mode::NoCoordinator && j == s && red_waiting;
        if state.g[j] > 0 && !blocked {
            out.green_success = Some(j);
        }
    }

    let mut next = state.clone();
    next.t += 1;
    if let Some(i) = out.red_success {
        next.r[i] -= 1;
    }
    if let Some(i) = out.green_success {
        next.g[i] -= 1;
    }
    for i in 0..m {
        next.r[i] += draws.red[i];
        next.g[i] += draws.green[i];
    }
    (next, out)
}

/// The network as a stepping model.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self, NetError> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl SteppingModel for Network {
    type State = NetworkState;

    fn validate(&self, state: &NetworkState) -> Result<(), ChainError> {
        if state.t == 0 {
            return Err(ChainError::InvalidState("slots are numbered from 1".into()));
        }
        if state.r.len() != self.config.m || state.g.len() != self.config.m {
            return Err(ChainError::InvalidState(format!(
                "state has {} red and {} green queues for M = {}",
                state.r.len(),
                state.g.len(),
                self.config.m
            )));
        }
        Ok(())
    }

    fn step(&self, state: &NetworkState, rng: &mut RandomStream) -> Result<NetworkState, ChainError> {
        self.validate(state)?;
        let draws = SlotDraws::sample(&self.config, rng);
        Ok(apply(&self.config, state, &draws).0)
    }
}

/// The true chain and its dummy-packet dominating chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominatedState {
    pub truth: NetworkState,
    pub dominating: NetworkState,
}

impl DominatedState {
    pub fn new(state: NetworkState) -> Self {
        Self {
            truth: state.clone(),
            dominating: state,
        }
    }
}

/// Advances both chains with the same draws and checks
/// `R <= R~` and `G <= G~` componentwise.
pub fn step_dominated(
    config: &NetworkConfig,
    joint: &DominatedState,
    rng: &mut RandomStream,
) -> Result<DominatedState, NetError> {
    let draws = SlotDraws::sample(config, rng);
    let truth_cfg = NetworkConfig {
        dummy: false,
        ..config.clone()
    };
    let dom_cfg = NetworkConfig {
        dummy: true,
        ..config.clone()
    };
    let (truth, _) = apply(&truth_cfg, &joint.truth, &draws);
    let (dominating, _) = apply(&dom_cfg, &joint.dominating, &draws);
    for i in 0..config.m {
        if truth.g[i] > dominating.g[i] || truth.r[i] > dominating.r[i] {
            return Err(NetError::InvariantBreach(format!(
                "slot {}: station {} has (R, G) = ({}, {}) above the dominating ({}, {})",
                joint.truth.t,
                i + 1,
                truth.r[i],
                truth.g[i],
                dominating.r[i],
                dominating.g[i]
            )));
        }
    }
    Ok(DominatedState { truth, dominating })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(mode: Mode, m: usize) -> NetworkConfig {
        NetworkConfig::new(m, 0.4, 0.3, 0.2, mode, false, ArrivalLaw::Poisson).unwrap()
    }

    fn one(r: u64, g: u64) -> NetworkState {
        NetworkState {
            t: 1,
            r: vec![r],
            g: vec![g],
        }
    }

    #[test]
    fn coordinator_red_blocks_own_green() {
        let draws = SlotDraws {
            alpha: vec![true],
            ..SlotDraws::none(1)
        };
        let (next, _) = apply(&config(Mode::Coordinator, 1), &one(2, 1), &draws);
        assert_eq!((next.r[0], next.g[0], next.t), (1, 1, 2));
    }

    #[test]
    fn no_coordinator_red_and_green_collide() {
        let draws = SlotDraws {
            alpha: vec![true],
            ..SlotDraws::none(1)
        };
        let (next, out) = apply(&config(Mode::NoCoordinator, 1), &one(2, 1), &draws);
        assert_eq!((next.r[0], next.g[0]), (2, 1));
        assert!(out.red_collision);
    }

    #[test]
    fn empty_network_only_advances_time() {
        for mode in [Mode::Coordinator, Mode::NoCoordinator] {
            let s = NetworkState::empty(3);
            let draws = SlotDraws {
                alpha: vec![true, false, true],
                ..SlotDraws::none(3)
            };
            let (next, _) = apply(&config(mode, 3), &s, &draws);
            assert_eq!(next.r, s.r);
            assert_eq!(next.g, s.g);
            assert_eq!(next.t, 2);
        }
    }

    #[test]
    fn arrivals_wait_one_slot() {
        let draws = SlotDraws {
            red: vec![1],
            green: vec![1],
            alpha: vec![true],
        };
        let (next, out) = apply(&config(Mode::Coordinator, 1), &one(0, 0), &draws);
        assert_eq!(out, SlotOutcome::default());
        assert_eq!((next.r[0], next.g[0]), (1, 1));
    }

    #[test]
    fn dummy_packet_blocks_other_station() {
        let mut cfg = config(Mode::Coordinator, 2);
        let s = NetworkState {
            t: 2,
            r: vec![0, 0],
            g: vec![3, 0],
        };
        let draws = SlotDraws {
            alpha: vec![true, true],
            ..SlotDraws::none(2)
        };
        assert_eq!(apply(&cfg, &s, &draws).1.green_success, Some(0));
        cfg.dummy = true;
        assert_eq!(apply(&cfg, &s, &draws).1.green_success, None);
    }

    #[test]
    fn zero_green_arrivals_keep_equality() {
        let cfg = NetworkConfig::new(3, 0.4, 0.3, 0.0, Mode::Coordinator, false, ArrivalLaw::Poisson)
            .unwrap();
        let mut joint = DominatedState::new(NetworkState::empty(3));
        let mut rng = RandomStream::new(5, 0);
        for _ in 0..1000 {
            joint = step_dominated(&cfg, &joint, &mut rng).unwrap();
            assert_eq!(joint.truth.g, vec![0; 3]);
            assert_eq!(joint.truth, joint.dominating);
        }
    }

    fn mode() -> impl Strategy<Value = Mode> {
        prop_oneof![Just(Mode::Coordinator), Just(Mode::NoCoordinator)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn slot_rules_conserve_messages(
            mode in mode(),
            m in 1usize..5,
            seed in any::<u64>(),
            p in 0.05f64..0.95,
            lr in 0.0f64..1.5,
            lg in 0.0f64..1.5,
        ) {
            let cfg = NetworkConfig::new(m, p, lr, lg, mode, false, ArrivalLaw::Poisson).unwrap();
            let mut rng = RandomStream::new(seed, 0);
            let mut s = NetworkState::empty(m);
            for _ in 0..300 {
                let draws = SlotDraws::sample(&cfg, &mut rng);
                let (next, out) = apply(&cfg, &s, &draws);
                let owner = ((s.t - 1) % m as u64) as usize;
                for i in 0..m {
                    let red_out = (out.red_success == Some(i)) as u64;
                    let green_out = (out.green_success == Some(i)) as u64;
                    prop_assert_eq!(next.r[i] + red_out, s.r[i] + draws.red[i]);
                    prop_assert_eq!(next.g[i] + green_out, s.g[i] + draws.green[i]);
                }
                if let Some(i) = out.red_success {
                    prop_assert_eq!(i, owner);
                }
                if mode == Mode::Coordinator && out.red_success.is_some() {
                    prop_assert_ne!(out.green_success, Some(owner));
                }
                s = next;
            }
        }

        #[test]
        fn dummy_chain_dominates(
            mode in mode(),
            m in 1usize..5,
            seed in any::<u64>(),
            p in 0.05f64..0.95,
            lr in 0.0f64..0.9,
            lg in 0.0f64..1.0,
        ) {
            let cfg = NetworkConfig::new(m, p, lr, lg, mode, false, ArrivalLaw::Poisson).unwrap();
            let mut rng = RandomStream::new(seed, 1);
            let mut joint = DominatedState::new(NetworkState::empty(m));
            for _ in 0..500 {
                joint = step_dominated(&cfg, &joint, &mut rng).unwrap();
                if mode == Mode::Coordinator {
                    prop_assert_eq!(&joint.truth.r, &joint.dominating.r);
                }
            }
        }
    }
}
