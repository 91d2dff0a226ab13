//! Slotted network of `M` stations sharing a channel between scheduled
//! (red) and random-access (green) traffic.
//!
//! Slots are numbered from 1 and station `i(t) = ((t - 1) mod M) + 1` owns
//! slot `t`. Stations are stored 0-based, so the owner of slot `t` sits at
//! index `(t - 1) mod M`.

pub mod kernel;
pub mod sim;
pub mod trace;

pub use kernel::{build_truncated_kernel, empty_red_set, KernelBudget, TruncatedKernel};
pub use sim::{step_dominated, DominatedState, Network, SlotDraws, SlotOutcome};
pub use trace::write_trace;

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("kernel needs {required} joint states, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },
    #[error("invariant breach: {0}")]
    InvariantBreach(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[serde(alias = "coordinator")]
    Coordinator,
    #[serde(alias = "no_coordinator")]
    NoCoordinator,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Coordinator => "COORDINATOR",
            Mode::NoCoordinator => "NO_COORDINATOR",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "COORDINATOR" => Ok(Mode::Coordinator),
            "NO_COORDINATOR" => Ok(Mode::NoCoordinator),
            _ => Err(NetError::InvalidConfig(format!("unknown mode {s:?}"))),
        }
    }
}

/// Batch-size law of the per-slot arrivals of one colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalLaw {
    Bernoulli,
    #[default]
    Poisson,
}

impl std::str::FromStr for ArrivalLaw {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        match s.to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(ArrivalLaw::Bernoulli),
            "poisson" => Ok(ArrivalLaw::Poisson),
            _ => Err(NetError::InvalidConfig(format!("unknown arrival law {s:?}"))),
        }
    }
}

/// Poisson tails below this are lumped into the last kept batch size.
const PMF_TAIL: f64 = 1e-17;

impl ArrivalLaw {
    /// Batch-size probabilities `P(k)`, `k = 0..`, with the tail folded into
    /// the last entry.
    pub fn pmf(self, rate: f64) -> Vec<f64> {
        match self {
            ArrivalLaw::Bernoulli => vec![1.0 - rate, rate],
            ArrivalLaw::Poisson => {
                if rate == 0.0 {
                    return vec![1.0];
                }
                let mut out = vec![(-rate).exp()];
                let mut acc = out[0];
                let mut k = 0;
                while 1.0 - acc > PMF_TAIL && k < 10_000 {
                    k += 1;
                    let next = out[k - 1] * rate / k as f64;
                    if next == 0.0 && k as f64 > rate {
                        break;
                    }
                    out.push(next);
                    acc += next;
                }
                let last = out.len() - 1;
                out[last] += (1.0 - acc).max(0.0);
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub p: f64,
    #[serde(rename = "lambda_R")]
    pub lambda_r: f64,
    #[serde(rename = "lambda_G")]
    pub lambda_g: f64,
    pub mode: Mode,
    #[serde(default)]
    pub dummy: bool,
    #[serde(default)]
    pub arrival_law: ArrivalLaw,
}

impl NetworkConfig {
    pub fn new(
        m: usize,
        p: f64,
        lambda_r: f64,
        lambda_g: f64,
        mode: Mode,
        dummy: bool,
        arrival_law: ArrivalLaw,
    ) -> Result<Self, NetError> {
        let c = Self {
            m,
            p,
            lambda_r,
            lambda_g,
            mode,
            dummy,
            arrival_law,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.m == 0 {
            return Err(NetError::InvalidConfig("M must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(NetError::InvalidConfig(format!("p = {} outside (0, 1)", self.p)));
        }
        for (name, rate) in [("lambda_R", self.lambda_r), ("lambda_G", self.lambda_g)] {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(NetError::InvalidConfig(format!("{name} = {rate} is not a rate")));
            }
            if self.arrival_law == ArrivalLaw::Bernoulli && rate > 1.0 {
                return Err(NetError::InvalidConfig(format!(
                    "{name} = {rate} exceeds 1 under Bernoulli arrivals"
                )));
            }
        }
        Ok(())
    }

    pub fn with_lambda_g(&self, lambda_g: f64) -> Self {
        Self {
            lambda_g,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    /// Slot index, starting at 1.
    pub t: u64,
    pub r: Vec<u64>,
    pub g: Vec<u64>,
}

impl NetworkState {
    pub fn empty(m: usize) -> Self {
        Self {
            t: 1,
            r: vec![0; m],
            g: vec![0; m],
        }
    }

    pub fn total_green(&self) -> u64 {
        self.g.iter().sum()
    }

    pub fn total_red(&self) -> u64 {
        self.r.iter().sum()
    }
}

/// 1-based owner of slot `t`.
pub fn scheduled_station(t: u64, m: usize) -> usize {
    assert!(t >= 1 && m >= 1, "slots and stations are numbered from 1");
    ((t - 1) % m as u64) as usize + 1
}

/// Rotates coordinates so that position 1 holds the owner of slot `t`.
pub fn cyclic_view(state: &NetworkState) -> NetworkState {
    let m = state.r.len();
    let s = scheduled_station(state.t, m) - 1;
    let rot = |v: &[u64]| (0..m).map(|k| v[(s + k) % m]).collect();
    NetworkState {
        t: state.t,
        r: rot(&state.r),
        g: rot(&state.g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Threshold {
    /// Critical green rate.
    Critical(f64),
    /// The red-rate precondition fails.
    Infeasible,
}

impl Threshold {
    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Critical(v) => Some(v),
            Threshold::Infeasible => None,
        }
    }
}

/// Critical `lambda_G` below which the network is stable.
pub fn theoretical_threshold(config: &NetworkConfig) -> Threshold {
    let (m, p, lr) = (config.m as i32, config.p, config.lambda_r);
    let (rho, exp_busy) = match config.mode {
        Mode::Coordinator => {
            if lr >= 1.0 {
                return Threshold::Infeasible;
            }
            (lr, m - 2)
        }
        Mode::NoCoordinator => {
            if lr >= 1.0 - p {
                return Threshold::Infeasible;
            }
            (lr / (1.0 - p), m - 1)
        }
    };
    if m == 1 {
        return Threshold::Critical((1.0 - rho) * p);
    }
    let busy = rho * (m - 1) as f64 * p * (1.0 - p).powi(exp_busy);
    let idle = (1.0 - rho) * m as f64 * p * (1.0 - p).powi(m - 1);
    Threshold::Critical(busy + idle)
}

/// Long-run probability that the owner of a slot has no red message.
///
/// Without a coordinator this is the dominating chain's value, in which a
/// red message leaves only when its station does not also transmit.
pub fn idle_reference(config: &NetworkConfig) -> Option<f64> {
    match config.mode {
        Mode::Coordinator => (config.lambda_r < 1.0).then(|| 1.0 - config.lambda_r),
        Mode::NoCoordinator => (config.lambda_r < 1.0 - config.p)
            .then(|| 1.0 - config.lambda_r / (1.0 - config.p)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: Mode, m: usize, p: f64, lr: f64) -> NetworkConfig {
        NetworkConfig::new(m, p, lr, 0.0, mode, false, ArrivalLaw::Poisson).unwrap()
    }

    #[test]
    fn round_robin() {
        assert_eq!(scheduled_station(1, 3), 1);
        assert_eq!(scheduled_station(3, 3), 3);
        assert_eq!(scheduled_station(4, 3), 1);
        assert_eq!(scheduled_station(7, 1), 1);
    }

    #[test]
    fn thresholds() {
        let close = |t: Threshold, v: f64| (t.value().unwrap() - v).abs() < 1e-12;
        assert!(close(theoretical_threshold(&cfg(Mode::Coordinator, 1, 0.3, 0.5)), 0.15));
        assert!(close(theoretical_threshold(&cfg(Mode::Coordinator, 2, 0.5, 0.5)), 0.5));
        assert!(close(theoretical_threshold(&cfg(Mode::NoCoordinator, 1, 0.5, 0.4)), 0.1));
        assert!(close(theoretical_threshold(&cfg(Mode::NoCoordinator, 2, 0.5, 0.2)), 0.4));
        assert_eq!(
            theoretical_threshold(&cfg(Mode::NoCoordinator, 2, 0.5, 0.6)),
            Threshold::Infeasible
        );
        assert_eq!(
            theoretical_threshold(&cfg(Mode::Coordinator, 2, 0.5, 1.0)),
            Threshold::Infeasible
        );
    }

    #[test]
    fn rotation() {
        let s = NetworkState {
            t: 2,
            r: vec![1, 2, 3],
            g: vec![4, 5, 6],
        };
        let c = cyclic_view(&s);
        assert_eq!(c.r, vec![2, 3, 1]);
        assert_eq!(c.g, vec![5, 6, 4]);
        let s1 = NetworkState { t: 4, ..s.clone() };
        assert_eq!(cyclic_view(&s1), s1);
    }

    #[test]
    fn poisson_pmf_is_normalised() {
        let pmf = ArrivalLaw::Poisson.pmf(0.7);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((pmf[1] - 0.7 * (-0.7f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        assert!(NetworkConfig::new(0, 0.5, 0.1, 0.1, Mode::Coordinator, false, ArrivalLaw::Poisson).is_err());
        assert!(NetworkConfig::new(1, 1.0, 0.1, 0.1, Mode::Coordinator, false, ArrivalLaw::Poisson).is_err());
        assert!(NetworkConfig::new(1, 0.5, 1.5, 0.1, Mode::Coordinator, false, ArrivalLaw::Bernoulli).is_err());
        assert!("no-coordinator".parse::<Mode>().is_ok());
    }
}
