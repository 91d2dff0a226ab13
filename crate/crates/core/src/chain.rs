//! Stepping interface, seeded random streams and trajectory recording for
//! discrete-time stochastic recursions.
//!
//! Every model advances one slot at a time through [`SteppingModel::step`],
//! consuming draws from a [`RandomStream`]. A stream is fully determined by
//! `(seed, stream_id)`: the seed picks a ChaCha8 key and the stream id picks
//! one of its 2^64 independent streams, so replications can run in parallel
//! without sharing generator state and still replay bit-for-bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid trajectory request: {0}")]
    InvalidRequest(String),
}

/// Deterministic random stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Draws an index from a probability vector by inversion.
    ///
    /// Mass lost to rounding falls on the last index with positive weight.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A discrete-time model advanced one slot per call.
///
/// Implementations document the order in which they consume draws; the
/// order is part of the contract because coupled runs rely on it.
pub trait SteppingModel {
    type State: Clone;

    fn validate(&self, state: &Self::State) -> Result<(), ChainError>;

    fn step(&self, state: &Self::State, rng: &mut RandomStream) -> Result<Self::State, ChainError>;
}

/// States recorded every `thinning` slots, starting with the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    /// Slot index of the last recorded state (0 is the initial state).
    pub slot_index: u64,
    pub thinning: u64,
}

impl<S> Trajectory<S> {
    /// Slot index of the `k`-th recorded state.
    pub fn slot_of(&self, k: usize) -> u64 {
        k as u64 * self.thinning
    }
}

pub fn trajectory<M: SteppingModel>(
    model: &M,
    state0: M::State,
    slots: u64,
    thinning: u64,
    rng: &mut RandomStream,
) -> Result<Trajectory<M::State>, ChainError> {
    if thinning == 0 {
        return Err(ChainError::InvalidRequest("thinning must be at least 1".into()));
    }
    model.validate(&state0)?;
    let mut states = Vec::with_capacity((slots / thinning) as usize + 1);
    states.push(state0.clone());
    let mut current = state0;
    let mut last_recorded = 0;
    for t in 1..=slots {
        current = model.step(&current, rng)?;
        if t % thinning == 0 {
            states.push(current.clone());
            last_recorded = t;
        }
    }
    Ok(Trajectory {
        states,
        slot_index: last_recorded,
        thinning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Countdown;

    impl SteppingModel for Countdown {
        type State = i64;

        fn validate(&self, state: &i64) -> Result<(), ChainError> {
            if *state < 0 {
                return Err(ChainError::InvalidState(format!("negative count {state}")));
            }
            Ok(())
        }

        fn step(&self, state: &i64, _rng: &mut RandomStream) -> Result<i64, ChainError> {
            self.validate(state)?;
            Ok((state - 1).max(0))
        }
    }

    struct ReflectedWalk;

    impl SteppingModel for ReflectedWalk {
        type State = u64;

        fn validate(&self, _state: &u64) -> Result<(), ChainError> {
            Ok(())
        }

        fn step(&self, state: &u64, rng: &mut RandomStream) -> Result<u64, ChainError> {
            Ok(if rng.bernoulli(0.5) {
                state + 1
            } else {
                state.saturating_sub(1)
            })
        }
    }

    #[test]
    fn deterministic_model_leaves_stream_untouched() {
        let mut rng = RandomStream::new(7, 0);
        let before = rng.position();
        assert_eq!(Countdown.step(&4, &mut rng).unwrap(), 3);
        assert_eq!(rng.position(), before);
    }

    #[test]
    fn invalid_state_rejected() {
        let mut rng = RandomStream::new(7, 0);
        assert!(matches!(
            Countdown.step(&-1, &mut rng),
            Err(ChainError::InvalidState(_))
        ));
    }

    #[test]
    fn same_seed_same_draws() {
        let mut a = RandomStream::new(42, 3);
        let mut b = RandomStream::new(42, 3);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let s = ReflectedWalk.step(&5, &mut RandomStream::new(1, 1)).unwrap();
        let s2 = ReflectedWalk.step(&5, &mut RandomStream::new(1, 1)).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn distinct_streams_look_independent() {
        let n = 100_000;
        let mut a = RandomStream::new(42, 0);
        let mut b = RandomStream::new(42, 1);
        let xs: Vec<f64> = (0..n).map(|_| a.uniform() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.uniform() - 0.5).collect();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // var(U - 1/2) = 1/12, so the correlation estimate has sd ~ 1/sqrt(n)
        let corr = cov * 12.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn trajectory_lengths() {
        let mut rng = RandomStream::new(0, 0);
        let t0 = trajectory(&Countdown, 3, 0, 1, &mut rng).unwrap();
        assert_eq!(t0.states, vec![3]);
        let t5 = trajectory(&Countdown, 3, 5, 1, &mut rng).unwrap();
        assert_eq!(t5.states, vec![3, 2, 1, 0, 0, 0]);
        let t7 = trajectory(&Countdown, 10, 7, 3, &mut rng).unwrap();
        assert_eq!(t7.states, vec![10, 7, 4]);
        assert_eq!(t7.slot_index, 6);
        assert!(trajectory(&Countdown, 3, 5, 0, &mut rng).is_err());
    }

    #[test]
    fn trajectory_replays() {
        let a = trajectory(&ReflectedWalk, 0, 500, 2, &mut RandomStream::new(9, 4)).unwrap();
        let b = trajectory(&ReflectedWalk, 0, 500, 2, &mut RandomStream::new(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reflected_walk_matches_reference() {
        // Reference walk: explicit branch on a raw uniform, driven by streams
        // disjoint from the ones the model uses.
        let slots = 10_000;
        let reps = 200u64;
        let mean_of = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let var_of = |xs: &[f64], m: f64| {
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        };

        let model: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = RandomStream::new(2024, r);
                let traj = trajectory(&ReflectedWalk, 0, slots, 1, &mut rng).unwrap();
                *traj.states.last().unwrap() as f64
            })
            .collect();
        let reference: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = RandomStream::new(2024, 1_000_000 + r);
                let mut pos: i64 = 0;
                for _ in 0..slots {
                    let u = rng.uniform();
                    pos = if u < 0.5 { pos + 1 } else { (pos - 1).max(0) };
                }
                pos as f64
            })
            .collect();

        let (ma, mb) = (mean_of(&model), mean_of(&reference));
        let se = ((var_of(&model, ma) + var_of(&reference, mb)) / reps as f64).sqrt();
        assert!((ma - mb).abs() < 3.0 * se, "{ma} vs {mb} (se {se})");
    }
}
