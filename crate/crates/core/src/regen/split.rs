//! Split chain built from a minorization `P^m(x, .) >= p mu` on `V`.

use serde::{Deserialize, Serialize};

use crate::analysis::kernel::StateSet;
use crate::analysis::markov::{check_minorization, expected_hitting_time};
use crate::analysis::sparse::CsrMatrix;
use crate::chain::RandomStream;

use super::RegenError;

/// Tolerance below which `p` is treated as 1 and `Q` is left unused.
const FULL_MASS_TOL: f64 = 1e-12;

/// `P^m(x, .) = p mu + (1 - p) Q_x` for `x` in `V`.
///
/// The split is applied at every visit to `V` that is not inside an
/// `m`-step block; other slots move with the one-step kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitKernel {
    px: CsrMatrix,
    v: StateSet,
    m: usize,
    p: f64,
    mu: Vec<f64>,
    /// Residual rows, indexed like `v.members()`; `None` when `p = 1`.
    q: Option<Vec<Vec<f64>>>,
    /// `powers[k]` is `P^k` in row-major order, `k = 0..=m`.
    powers: Vec<Vec<f64>>,
}

/// Summary of a split kernel for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub m: usize,
    pub p: f64,
    pub mu: Vec<f64>,
    pub v: Vec<usize>,
    pub q_used: bool,
    pub reconstruction_error: f64,
}

fn dense_powers(px: &CsrMatrix, m: usize) -> Vec<Vec<f64>> {
    let n = px.n_rows();
    let mut out = Vec::with_capacity(m + 1);
    let mut cur: Vec<f64> = (0..n * n)
        .map(|k| if k / n == k % n { 1.0 } else { 0.0 })
        .collect();
    out.push(cur.clone());
    for _ in 0..m {
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for (k, a) in px.row(i) {
                for j in 0..n {
                    next[i * n + j] += a * cur[k * n + j];
                }
            }
        }
        cur = next;
        out.push(cur.clone());
    }
    out
}

/// Split with the largest minorization mass.
pub fn build_split_kernel(px: &CsrMatrix, v: &StateSet, m: usize) -> Result<SplitKernel, RegenError> {
    let minor = check_minorization(px, v, m)?.ok_or(RegenError::NoMinorization)?;
    split_with(px, v, m, minor.p, minor.mu)
}

/// Split with a reduced mass `p` not exceeding the largest admissible one.
pub fn build_split_kernel_with_mass(
    px: &CsrMatrix,
    v: &StateSet,
    m: usize,
    p: f64,
) -> Result<SplitKernel, RegenError> {
    let minor = check_minorization(px, v, m)?.ok_or(RegenError::NoMinorization)?;
    if !(p > 0.0 && p <= minor.p + FULL_MASS_TOL) {
        return Err(RegenError::InvalidArgument(format!(
            "mass {p} outside (0, {}]",
            minor.p
        )));
    }
    split_with(px, v, m, p.min(minor.p), minor.mu)
}

fn split_with(
    px: &CsrMatrix,
    v: &StateSet,
    m: usize,
    p: f64,
    mu: Vec<f64>,
) -> Result<SplitKernel, RegenError> {
    let n = px.n_rows();
    let powers = dense_powers(px, m);
    let q = if p >= 1.0 - FULL_MASS_TOL {
        None
    } else {
        let pm = &powers[m];
        Some(
            v.members()
                .iter()
                .map(|&x| {
                    let mut row: Vec<f64> = (0..n)
                        .map(|j| ((pm[x * n + j] - p * mu[j]) / (1.0 - p)).max(0.0))
                        .collect();
                    let s: f64 = row.iter().sum();
                    if s > 0.0 {
                        row.iter_mut().for_each(|r| *r /= s);
                    }
                    row
                })
                .collect(),
        )
    };
    Ok(SplitKernel {
        px: px.clone(),
        v: v.clone(),
        m,
        p: if q.is_none() { 1.0 } else { p },
        mu,
        q,
        powers,
    })
}

impl SplitKernel {
    pub fn px(&self) -> &CsrMatrix {
        &self.px
    }

    pub fn v(&self) -> &StateSet {
        &self.v
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Residual row for `x` in `V`.
    pub fn q_row(&self, x: usize) -> Option<&[f64]> {
        let k = self.v.members().iter().position(|&y| y == x)?;
        self.q.as_ref().map(|q| q[k].as_slice())
    }

    pub fn q_used(&self) -> bool {
        self.q.is_some()
    }

    /// `P^m` row for `x`.
    pub fn power_row(&self, x: usize) -> &[f64] {
        let n = self.px.n_rows();
        &self.powers[self.m][x * n..(x + 1) * n]
    }

    /// Largest entrywise `|p mu + (1 - p) Q_x - P^m(x, .)|` over `V`.
    pub fn reconstruction_error(&self) -> f64 {
        let n = self.px.n_rows();
        let mut worst: f64 = 0.0;
        for &x in self.v.members() {
            let target = self.power_row(x);
            let q = self.q_row(x);
            for j in 0..n {
                let rebuilt = self.p * self.mu[j] + q.map_or(0.0, |q| (1.0 - self.p) * q[j]);
                worst = worst.max((rebuilt - target[j]).abs());
            }
        }
        worst
    }

    pub fn summary(&self) -> SplitSummary {
        SplitSummary {
            m: self.m,
            p: self.p,
            mu: self.mu.clone(),
            v: self.v.members().to_vec(),
            q_used: self.q_used(),
            reconstruction_error: self.reconstruction_error(),
        }
    }

    /// `E kappa <= s0 (1 - p) / p + 1`, stated for one-step splits.
    pub fn kappa_bound(&self) -> Result<Option<f64>, RegenError> {
        if self.m != 1 {
            return Ok(None);
        }
        let s0 = expected_hitting_time(&self.px, &self.v)?.s0;
        Ok(Some(s0 * (1.0 - self.p) / self.p + 1.0))
    }

    /// Draws the `m`-step successor of `x` in `V` given the split flag.
    pub(crate) fn block_target(&self, x: usize, beta: bool, rng: &mut RandomStream) -> usize {
        if beta {
            rng.categorical(&self.mu)
        } else {
            rng.categorical(self.q_row(x).expect("residual rows exist when p < 1"))
        }
    }

    /// Intermediate slots of an `m`-block from `x` to `w`, excluding both ends.
    fn bridge(&self, x: usize, w: usize, rng: &mut RandomStream, out: &mut Vec<usize>) {
        let n = self.px.n_rows();
        let mut z = x;
        let mut weights = vec![0.0; n];
        for j in 1..self.m {
            let rest = &self.powers[self.m - j];
            weights.iter_mut().for_each(|w| *w = 0.0);
            let mut total = 0.0;
            for (z2, a) in self.px.row(z) {
                let wgt = a * rest[z2 * n + w];
                weights[z2] = wgt;
                total += wgt;
            }
            weights.iter_mut().for_each(|w| *w /= total);
            z = rng.categorical(&weights);
            out.push(z);
        }
    }

    /// One path of the split chain over `slots` steps from `x0`.
    ///
    /// Returns the visited states `X^0..=X^slots` and the slots at which the
    /// chain was drawn fresh from `mu`.
    pub fn simulate_path(
        &self,
        x0: usize,
        slots: usize,
        rng: &mut RandomStream,
    ) -> (Vec<usize>, Vec<usize>) {
        let mut states = Vec::with_capacity(slots + self.m);
        let mut regen = Vec::new();
        states.push(x0);
        let mut x = x0;
        while states.len() <= slots {
            if self.v.contains(x) {
                let beta = rng.bernoulli(self.p);
                let w = self.block_target(x, beta, rng);
                self.bridge(x, w, rng, &mut states);
                states.push(w);
                if beta {
                    regen.push(states.len() - 1);
                }
                x = w;
            } else {
                x = rng.categorical(&self.px.row_dense(x));
                states.push(x);
            }
        }
        states.truncate(slots + 1);
        regen.retain(|&t| t <= slots);
        (states, regen)
    }

    /// First regeneration slot `kappa` from `x0`, or `None` past `max_slots`.
    pub fn first_regeneration(
        &self,
        x0: usize,
        max_slots: u64,
        rng: &mut RandomStream,
    ) -> Option<u64> {
        let mut x = x0;
        let mut t: u64 = 0;
        let mut row = vec![0.0; self.px.n_rows()];
        while t < max_slots {
            if self.v.contains(x) {
                let beta = rng.bernoulli(self.p);
                if beta {
                    return Some(t + self.m as u64);
                }
                let w = self.block_target(x, false, rng);
                t += self.m as u64;
                x = w;
            } else {
                row.iter_mut().for_each(|r| *r = 0.0);
                for (j, a) in self.px.row(x) {
                    row[j] = a;
                }
                x = rng.categorical(&row);
                t += 1;
            }
        }
        None
    }
}

/// Per-replication first regeneration times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerationSample {
    pub x0: usize,
    pub kappa: Vec<u64>,
    pub censored: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `s0 (1 - p) / p + 1` for one-step splits.
    pub bound: Option<f64>,
}

pub const DEFAULT_MAX_SLOTS: u64 = 10_000_000;

/// Replication `r` uses stream `r`.
pub fn simulate_regenerations(
    split: &SplitKernel,
    x0: usize,
    reps: usize,
    seed: u64,
) -> Result<RegenerationSample, RegenError> {
    use rayon::prelude::*;
    if !split.v.contains(x0) {
        return Err(RegenError::InvalidArgument(format!("start {x0} is not in V")));
    }
    if reps == 0 {
        return Err(RegenError::InvalidArgument("reps must be positive".into()));
    }
    let draws: Vec<Option<u64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::new(seed, r as u64);
            split.first_regeneration(x0, DEFAULT_MAX_SLOTS, &mut rng)
        })
        .collect();
    let kappa: Vec<u64> = draws.iter().flatten().copied().collect();
    let censored = reps - kappa.len();
    let n = kappa.len().max(1) as f64;
    let mean = kappa.iter().map(|&k| k as f64).sum::<f64>() / n;
    let var = kappa.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(RegenerationSample {
        x0,
        kappa,
        censored,
        mean,
        std_error: (var / n).sqrt(),
        bound: split.kappa_bound()?,
    })
}

/// Empirical law of `X^t` over `reps` split-chain paths from `x0`.
pub fn split_marginal(split: &SplitKernel, x0: usize, t: usize, reps: usize, seed: u64) -> Vec<f64> {
    use rayon::prelude::*;
    let n = split.px.n_rows();
    let counts = (0..reps)
        .into_par_iter()
        .fold(
            || vec![0usize; n],
            |mut acc, r| {
                let mut rng = RandomStream::new(seed, r as u64);
                let (states, _) = split.simulate_path(x0, t, &mut rng);
                acc[states[t]] += 1;
                acc
            },
        )
        .reduce(
            || vec![0usize; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    counts.iter().map(|&c| c as f64 / reps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_give_full_mass() {
        let px = CsrMatrix::from_dense(2, 2, &[0.3, 0.7, 0.3, 0.7]);
        let s = build_split_kernel(&px, &StateSet::full(2).unwrap(), 1).unwrap();
        assert_eq!(s.p(), 1.0);
        assert!(!s.q_used());
        assert_eq!(s.mu(), &[0.3, 0.7]);
    }

    #[test]
    fn hand_split() {
        let px = CsrMatrix::from_dense(2, 2, &[0.5, 0.5, 0.25, 0.75]);
        let s = build_split_kernel(&px, &StateSet::full(2).unwrap(), 1).unwrap();
        assert!((s.p() - 0.75).abs() < 1e-15);
        assert!((s.mu()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.q_row(0).unwrap(), &[1.0, 0.0]);
        assert_eq!(s.q_row(1).unwrap(), &[0.0, 1.0]);
        assert!(s.reconstruction_error() < 1e-12);
    }

    #[test]
    fn disjoint_rows_have_no_split() {
        let px = CsrMatrix::from_dense(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            build_split_kernel(&px, &StateSet::full(2).unwrap(), 1),
            Err(RegenError::NoMinorization)
        );
    }

    #[test]
    fn full_mass_regenerates_immediately() {
        let px = CsrMatrix::identity(1);
        let s = build_split_kernel(&px, &StateSet::full(1).unwrap(), 1).unwrap();
        let r = simulate_regenerations(&s, 0, 50, 1).unwrap();
        assert!(r.kappa.iter().all(|&k| k == 1));
    }

    #[test]
    fn absorbing_state_geometric() {
        let px = CsrMatrix::identity(1);
        let s = build_split_kernel_with_mass(&px, &StateSet::full(1).unwrap(), 1, 0.5).unwrap();
        let r = simulate_regenerations(&s, 0, 100_000, 7).unwrap();
        assert_eq!(r.bound, Some(2.0));
        assert!((r.mean - 2.0).abs() < 3.0 * r.std_error, "{} +- {}", r.mean, r.std_error);
    }

    #[test]
    fn two_step_blocks_bridge_consistently() {
        let px = CsrMatrix::from_dense(3, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.2, 0.3, 0.5]);
        let v = StateSet::new(3, [0]).unwrap();
        let s = build_split_kernel_with_mass(&px, &v, 2, 0.4).unwrap();
        let mut rng = RandomStream::new(3, 0);
        for _ in 0..200 {
            let (path, _) = s.simulate_path(0, 30, &mut rng);
            assert_eq!(path.len(), 31);
            for w in path.windows(2) {
                assert!(px.get(w[0], w[1]) > 0.0, "impossible move {w:?}");
            }
        }
    }
}
