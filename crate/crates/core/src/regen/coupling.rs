//! Coupling of two split chains through a joint regeneration from `mu`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::markov::stationary_distribution;
use crate::chain::RandomStream;

use super::split::SplitKernel;
use super::RegenError;

/// Outcome of one coupled replication, in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoupledRun {
    /// First regeneration of the chain started in `V`.
    pub kappa: Option<u64>,
    /// First joint regeneration; `None` if censored at the horizon.
    pub nu: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub m: usize,
    pub t_max: u64,
    pub starts: Vec<usize>,
    /// Replications per start.
    pub replications: usize,
    /// `delta[t]`: estimate of `sup_{x in V} P_x(nu > t)`, `t = 0..=t_max`.
    pub delta: Vec<f64>,
    /// Pool-adjacent-violators non-increasing fit of `delta`.
    pub delta_isotonic: Vec<f64>,
    /// Per start, `P_x(nu > t)`.
    pub per_start: Vec<Vec<f64>>,
    pub kappa_mean: f64,
    pub kappa_std_error: f64,
    /// `s0 (1 - p) / p + 1` for one-step splits.
    pub kappa_bound: Option<f64>,
    pub censored: usize,
    pub warning: Option<String>,
}

impl CouplingReport {
    /// First `t` with `delta[t] <= level`.
    pub fn time_below(&self, level: f64) -> Option<u64> {
        self.delta.iter().position(|&d| d <= level).map(|t| t as u64)
    }
}

/// Non-increasing least-squares fit.
pub fn isotonic_non_increasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

impl SplitKernel {
    /// Successor of `x` over one decision epoch (`m` slots) when it is
    /// outside `V`, or inside `V` with a known split flag.
    fn epoch_step(&self, x: usize, beta: Option<bool>, rng: &mut RandomStream) -> usize {
        match beta {
            Some(b) => self.block_target(x, b, rng),
            None if self.m() == 1 => {
                let mut row = vec![0.0; self.px().n_rows()];
                for (j, a) in self.px().row(x) {
                    row[j] = a;
                }
                rng.categorical(&row)
            }
            None => rng.categorical(self.power_row(x)),
        }
    }

    /// Runs two copies from `x0` and `y0` on the `m`-skeleton until they
    /// regenerate together or `t_max` slots pass.
    ///
    /// When both copies sit in `V` they share the split flag of the first
    /// copy; on success both move to a common draw from `mu`.
    pub fn coupled_run(&self, x0: usize, y0: usize, t_max: u64, rng: &mut RandomStream) -> CoupledRun {
        let m = self.m() as u64;
        let (mut a, mut b) = (x0, y0);
        let mut kappa = None;
        let mut t = 0;
        while t < t_max {
            let in_a = self.v().contains(a);
            let in_b = self.v().contains(b);
            let beta_a = in_a.then(|| rng.bernoulli(self.p()));
            if beta_a == Some(true) && kappa.is_none() {
                kappa = Some(t + m);
            }
            if in_b && beta_a == Some(true) {
                return CoupledRun {
                    kappa,
                    nu: Some(t + m),
                };
            }
            let beta_b = if in_b {
                Some(beta_a.unwrap_or_else(|| rng.bernoulli(self.p())))
            } else {
                None
            };
            a = self.epoch_step(a, beta_a, rng);
            b = self.epoch_step(b, beta_b, rng);
            t += m;
        }
        CoupledRun { kappa, nu: None }
    }
}

/// Estimates `delta_t = sup_{x in V} P_x(nu > t)` with the second copy
/// started from the stationary law.
///
/// Start `k` (in `V` order), replication `r` uses stream `k * reps + r`.
/// Replications still uncoupled at `t_max` count as `nu > t_max`.
pub fn estimate_coupling_tail(
    split: &SplitKernel,
    t_max: u64,
    reps: usize,
    seed: u64,
) -> Result<CouplingReport, RegenError> {
    if reps == 0 || t_max == 0 {
        return Err(RegenError::InvalidArgument(
            "reps and t_max must be positive".into(),
        ));
    }
    let pi = stationary_distribution(split.px(), 1e-9)?;
    let starts = split.v().members().to_vec();
    let horizon = t_max as usize;
    let mut per_start = Vec::with_capacity(starts.len());
    let mut kappas = Vec::new();
    let mut censored = 0;
    for (k, &x0) in starts.iter().enumerate() {
        let runs: Vec<CoupledRun> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = RandomStream::new(seed, (k * reps + r) as u64);
                let y0 = rng.categorical(&pi);
                split.coupled_run(x0, y0, t_max, &mut rng)
            })
            .collect();
        let mut survival = vec![0usize; horizon + 1];
        for run in &runs {
            let end = run.nu.map_or(horizon + 1, |nu| (nu as usize).min(horizon + 1));
            survival[..end].iter_mut().for_each(|s| *s += 1);
            if run.nu.is_none() {
                censored += 1;
            }
            kappas.extend(run.kappa);
        }
        per_start.push(survival.iter().map(|&s| s as f64 / reps as f64).collect::<Vec<_>>());
    }
    let delta: Vec<f64> = (0..=horizon)
        .map(|t| per_start.iter().map(|d| d[t]).fold(0.0, f64::max))
        .collect();
    let n = kappas.len().max(1) as f64;
    let kappa_mean = kappas.iter().map(|&k| k as f64).sum::<f64>() / n;
    let var = kappas
        .iter()
        .map(|&k| (k as f64 - kappa_mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let total = reps * starts.len();
    let warning = if censored == total {
        Some(format!(
            "no joint regeneration within {t_max} slots in any replication; the chain may be periodic"
        ))
    } else if split.m() > 1 {
        Some(format!(
            "m = {} split: coupling runs on the {}-step skeleton",
            split.m(),
            split.m()
        ))
    } else {
        None
    };
    Ok(CouplingReport {
        m: split.m(),
        t_max,
        starts,
        replications: reps,
        delta_isotonic: isotonic_non_increasing(&delta),
        delta,
        per_start,
        kappa_mean,
        kappa_std_error: (var / n).sqrt(),
        kappa_bound: split.kappa_bound()?,
        censored,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::kernel::StateSet;
    use crate::analysis::sparse::CsrMatrix;
    use crate::regen::split::{build_split_kernel, build_split_kernel_with_mass};

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic_non_increasing(&[1.0, 0.5, 0.7, 0.2]), vec![1.0, 0.6, 0.6, 0.2]);
        assert_eq!(isotonic_non_increasing(&[0.0, 1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn single_state_couples_at_once() {
        let s = build_split_kernel(&CsrMatrix::identity(1), &StateSet::full(1).unwrap(), 1).unwrap();
        let r = estimate_coupling_tail(&s, 10, 100, 1).unwrap();
        assert_eq!(r.delta[0], 1.0);
        assert!(r.delta[1..].iter().all(|&d| d == 0.0));
        assert_eq!(r.censored, 0);
    }

    #[test]
    fn full_mass_on_full_space() {
        let px = CsrMatrix::from_dense(3, 3, &[0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5]);
        let s = build_split_kernel(&px, &StateSet::full(3).unwrap(), 1).unwrap();
        let r = estimate_coupling_tail(&s, 5, 200, 2).unwrap();
        assert!(r.delta[1..].iter().all(|&d| d == 0.0));
    }

    #[test]
    fn periodic_chain_warns() {
        let px = CsrMatrix::from_dense(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let v = StateSet::new(2, [0]).unwrap();
        let s = build_split_kernel_with_mass(&px, &v, 1, 1.0).unwrap();
        // start the second copy in state 1: it is never in V with the first
        let mut rng = RandomStream::new(0, 0);
        assert_eq!(s.coupled_run(0, 1, 50, &mut rng).nu, None);
    }
}
