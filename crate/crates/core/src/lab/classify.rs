//! Stability verdicts from simulated green-queue growth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::chain::{RandomStream, SteppingModel};
use crate::net::{Network, NetworkConfig, NetworkState};

use super::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Stable,
    Unstable,
    Inconclusive,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Stable => "STABLE",
            Label::Unstable => "UNSTABLE",
            Label::Inconclusive => "INCONCLUSIVE",
        })
    }
}

pub const CONFIDENCE: f64 = 0.99;
/// Smallest pooled return frequency accepted as recurrence.
pub const MIN_RETURN_FREQ: f64 = 0.05;
pub const MIN_WARMUP: u64 = 10_000;
pub const RETURN_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub slots: u64,
    pub replications: usize,
    /// Defaults to 10% of `slots`, at least [`MIN_WARMUP`] when that still
    /// leaves `slots >= 10 warmup`.
    pub warmup: Option<u64>,
    pub seed: u64,
}

impl ClassifyOptions {
    pub fn new(slots: u64, replications: usize, seed: u64) -> Self {
        Self {
            slots,
            replications,
            warmup: None,
            seed,
        }
    }

    pub fn effective_warmup(&self) -> u64 {
        self.warmup.unwrap_or_else(|| {
            let w = (self.slots / 10).max(MIN_WARMUP);
            if self.slots >= 10 * w {
                w
            } else {
                self.slots / 10
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub label: Label,
    /// Mean fitted growth of the total green queue, messages per slot.
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub slopes: Vec<f64>,
    /// Mean increment of the total green queue per `M` slots.
    pub period_increment: f64,
    /// Fraction of post-warmup samples with total green at most `n1`.
    pub return_freq: f64,
    pub n1: u64,
    pub warmup: u64,
    pub slots: u64,
    pub replications: usize,
}

struct RepResult {
    slope: f64,
    period_increment: f64,
    samples: Vec<u64>,
    warmup_samples: Vec<u64>,
}

fn ols_slope(times: impl Iterator<Item = f64> + Clone, ys: &[u64]) -> f64 {
    let n = ys.len() as f64;
    let tbar = times.clone().sum::<f64>() / n;
    let ybar = ys.iter().map(|&y| y as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, &y) in times.zip(ys) {
        sxy += (t - tbar) * (y as f64 - ybar);
        sxx += (t - tbar) * (t - tbar);
    }
    sxy / sxx
}

fn run_replication(net: &Network, opts: &ClassifyOptions, warmup: u64, r: usize) -> Result<RepResult, LabError> {
    let m = net.config.m as u64;
    let mut rng = RandomStream::new(opts.seed, r as u64);
    let mut state = NetworkState::empty(net.config.m);
    let mut samples = Vec::with_capacity(((opts.slots - warmup) / m) as usize + 1);
    let mut warmup_samples = Vec::new();
    let mut first_time = None;
    for t in 1..=opts.slots {
        state = net.step(&state, &mut rng)?;
        if t % m != 0 {
            continue;
        }
        if t <= warmup {
            if r == 0 {
                warmup_samples.push(state.total_green());
            }
        } else {
            first_time.get_or_insert(t);
            samples.push(state.total_green());
        }
    }
    let t0 = first_time.unwrap_or(0) as f64;
    let (slope, period_increment) = if samples.len() >= 3 {
        let times = (0..samples.len()).map(|k| t0 + (k as u64 * m) as f64);
        let inc = (*samples.last().unwrap() as f64 - samples[0] as f64) / (samples.len() - 1) as f64;
        (ols_slope(times, &samples), inc)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RepResult {
        slope,
        period_increment,
        samples,
        warmup_samples,
    })
}

fn quantile(values: &[u64], q: f64) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[k]
}

/// Classifies the network from `replications` independent runs.
///
/// Replication `r` uses stream `r` of `seed`. The total green queue is
/// sampled every `M` slots after warmup and regressed on time.
pub fn classify_stability(config: &NetworkConfig, opts: &ClassifyOptions) -> Result<StabilityVerdict, LabError> {
    let net = Network::new(config.clone())?;
    let warmup = opts.effective_warmup();
    if opts.slots < 10 * warmup || opts.slots == 0 {
        return Err(LabError::InvalidArgument(format!(
            "slots = {} must be at least 10 x warmup = {}",
            opts.slots,
            10 * warmup
        )));
    }
    if opts.replications < 4 {
        return Err(LabError::InvalidArgument(format!(
            "at least 4 replications are required, got {}",
            opts.replications
        )));
    }
    let reps: Vec<RepResult> = (0..opts.replications)
        .into_par_iter()
        .map(|r| run_replication(&net, opts, warmup, r))
        .collect::<Result<_, _>>()?;
    let n1 = quantile(&reps[0].warmup_samples, RETURN_QUANTILE);
    let (hits, total) = reps.iter().fold((0usize, 0usize), |(h, n), rep| {
        (h + rep.samples.iter().filter(|&&s| s <= n1).count(), n + rep.samples.len())
    });
    let return_freq = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    let slopes: Vec<f64> = reps.iter().map(|r| r.slope).collect();
    let k = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / k;
    let period_increment = reps.iter().map(|r| r.period_increment).sum::<f64>() / k;
    let sd = (slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let tq = StudentsT::new(0.0, 1.0, k - 1.0)
        .expect("k >= 4")
        .inverse_cdf(0.5 + CONFIDENCE / 2.0);
    let half = tq * sd / k.sqrt();
    let ci = (mean - half, mean + half);
    let label = if !mean.is_finite() || !half.is_finite() {
        Label::Inconclusive
    } else if ci.0 > 0.0 {
        Label::Unstable
    } else if return_freq >= MIN_RETURN_FREQ {
        Label::Stable
    } else {
        Label::Inconclusive
    };
    Ok(StabilityVerdict {
        label,
        slope: mean,
        slope_ci: ci,
        slopes,
        period_increment,
        return_freq,
        n1,
        warmup,
        slots: opts.slots,
        replications: opts.replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ArrivalLaw, Mode};

    #[test]
    fn ols_recovers_a_line() {
        let ys: Vec<u64> = (0..50).map(|k| 3 + 2 * k).collect();
        let s = ols_slope((0..50).map(|k| k as f64), &ys);
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_picks_order_statistic() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(quantile(&v, 0.95), 95);
        assert_eq!(quantile(&[], 0.95), 0);
    }

    #[test]
    fn no_green_traffic_is_stable() {
        let cfg = NetworkConfig::new(2, 0.5, 0.5, 0.0, Mode::Coordinator, false, ArrivalLaw::Poisson)
            .unwrap();
        let v = classify_stability(&cfg, &ClassifyOptions::new(200_000, 4, 1)).unwrap();
        assert_eq!(v.label, Label::Stable);
        assert_eq!(v.slope, 0.0);
        assert_eq!(v.return_freq, 1.0);
    }

    #[test]
    fn preconditions_are_checked() {
        let cfg = NetworkConfig::new(1, 0.5, 0.5, 0.1, Mode::Coordinator, false, ArrivalLaw::Poisson)
            .unwrap();
        assert!(classify_stability(&cfg, &ClassifyOptions::new(100_000, 2, 1)).is_err());
        let mut o = ClassifyOptions::new(100_000, 4, 1);
        o.warmup = Some(50_000);
        assert!(classify_stability(&cfg, &o).is_err());
    }

    #[test]
    fn default_warmup() {
        assert_eq!(ClassifyOptions::new(1_000_000, 4, 0).effective_warmup(), 100_000);
        assert_eq!(ClassifyOptions::new(50_000, 4, 0).effective_warmup(), 5_000);
    }
}
