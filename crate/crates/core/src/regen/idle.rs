//! Idle fraction of the recursion `Z' = max(Z - 1, 0) + chi`.

use serde::{Deserialize, Serialize};

use crate::chain::RandomStream;

use super::RegenError;

/// Law of a non-negative integer increment, as a probability vector over
/// `0, 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementLaw {
    pmf: Vec<f64>,
}

impl IncrementLaw {
    pub fn new(pmf: Vec<f64>) -> Result<Self, RegenError> {
        let total: f64 = pmf.iter().sum();
        if pmf.is_empty() || pmf.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(RegenError::InvalidArgument(
                "increment law must be a probability vector".into(),
            ));
        }
        Ok(Self { pmf })
    }

    pub fn zero() -> Self {
        Self { pmf: vec![1.0] }
    }

    pub fn bernoulli(q: f64) -> Result<Self, RegenError> {
        Self::new(vec![1.0 - q, q])
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
    }

    pub fn sample(&self, rng: &mut RandomStream) -> u64 {
        rng.categorical(&self.pmf) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleReport {
    /// Fraction of post-burn-in slots with `Z = 0`.
    pub estimate: f64,
    /// `1 - c`.
    pub expected: f64,
    pub c: f64,
    /// Batch-means standard error of `estimate`.
    pub std_error: f64,
    /// `mean I{Z = 0} + mean chi - 1` over the measured slots.
    pub balance: f64,
    pub slots: u64,
}

const BATCHES: u64 = 100;

/// Simulates from `Z = 0`, discards `burn_in` slots and measures `slots` more.
pub fn idle_probability_check(
    law: &IncrementLaw,
    slots: u64,
    burn_in: u64,
    seed: u64,
) -> Result<IdleReport, RegenError> {
    let c = law.mean();
    if c >= 1.0 {
        return Err(RegenError::InvalidArgument(format!(
            "increment mean {c} must be below 1"
        )));
    }
    if slots == 0 {
        return Err(RegenError::InvalidArgument("slots must be positive".into()));
    }
    let mut rng = RandomStream::new(seed, 0);
    let mut z: u64 = 0;
    for _ in 0..burn_in {
        z = z.saturating_sub(1) + law.sample(&mut rng);
    }
    let batch = (slots / BATCHES).max(1);
    let mut idle = 0u64;
    let mut chi_sum = 0u64;
    let mut batch_idle = 0u64;
    let mut batch_means = Vec::new();
    for t in 0..slots {
        if z == 0 {
            idle += 1;
            batch_idle += 1;
        }
        let chi = law.sample(&mut rng);
        chi_sum += chi;
        z = z.saturating_sub(1) + chi;
        if (t + 1) % batch == 0 {
            batch_means.push(batch_idle as f64 / batch as f64);
            batch_idle = 0;
        }
    }
    let n = slots as f64;
    let estimate = idle as f64 / n;
    let k = batch_means.len() as f64;
    let std_error = if k > 1.0 {
        let m = batch_means.iter().sum::<f64>() / k;
        (batch_means.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
    } else {
        0.0
    };
    Ok(IdleReport {
        estimate,
        expected: 1.0 - c,
        c,
        std_error,
        balance: estimate + chi_sum as f64 / n - 1.0,
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_increments_always_idle() {
        let r = idle_probability_check(&IncrementLaw::zero(), 1000, 0, 1).unwrap();
        assert_eq!(r.estimate, 1.0);
    }

    #[test]
    fn mean_at_least_one_is_rejected() {
        let law = IncrementLaw::new(vec![0.5, 0.0, 0.5]).unwrap();
        assert!(idle_probability_check(&law, 10, 0, 1).is_err());
    }

    #[test]
    fn bernoulli_half() {
        let law = IncrementLaw::bernoulli(0.5).unwrap();
        let r = idle_probability_check(&law, 1_000_000, 1000, 11).unwrap();
        assert!((r.estimate - 0.5).abs() < 0.01);
    }

    #[test]
    fn balance_is_a_telescoping_identity() {
        let law = IncrementLaw::new(vec![0.65, 0.0, 0.35]).unwrap();
        let r = idle_probability_check(&law, 200_000, 0, 5).unwrap();
        // Z_end - Z_0 = sum(chi + I - 1), so the balance is Z_end / slots >= 0
        assert!(r.balance >= 0.0 && r.balance < 1e-3, "{}", r.balance);
    }
}
