//! Drift conditions on the Y-component: bounded increments, the averaged
//! drift decomposition `f(x) + h(L2(y))`, exact multi-step drifts and the
//! sublinear-growth check.

use serde::{Deserialize, Serialize};

use super::kernel::{ModulatedKernel, StateSet};
use super::markov::stationary_distribution;
use super::AnalysisError;

/// Rows whose folded-back mass exceeds this are flagged.
pub const LEAK_THRESHOLD: f64 = 1e-9;
const ZERO_TOL: f64 = 1e-12;
/// Fraction of the highest L2 levels over which `f` is extracted.
pub const DEFAULT_TOP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// One-step drift `E[c(Y^1)] - c(y)` for each Y-kernel and each `y`.
fn drift_by_kernel(kernel: &ModulatedKernel, values: &[f64]) -> Vec<Vec<f64>> {
    kernel
        .y_kernels()
        .iter()
        .map(|k| {
            let moved = k.mul_vec(values);
            moved.iter().zip(values).map(|(a, b)| a - b).collect()
        })
        .collect()
}

fn abs_increment_by_kernel(kernel: &ModulatedKernel, values: &[f64]) -> Vec<Vec<f64>> {
    kernel
        .y_kernels()
        .iter()
        .map(|k| {
            (0..k.n_rows())
                .map(|y| k.row(y).map(|(y2, p)| p * (values[y2] - values[y]).abs()).sum())
                .collect()
        })
        .collect()
}

/// `sup_{x,y} E_{x,y} |c(Y^1) - c(y)|` over the kernels actually in use.
fn increment_bound_for(kernel: &ModulatedKernel, values: &[f64]) -> f64 {
    let inc = abs_increment_by_kernel(kernel, values);
    let mut used = vec![false; inc.len()];
    for &k in kernel.y_kernel_of() {
        used[k] = true;
    }
    inc.iter()
        .zip(&used)
        .filter(|(_, u)| **u)
        .flat_map(|(row, _)| row.iter().copied())
        .fold(0.0, f64::max)
}

/// Per-coordinate increment bounds `U_i` (one entry in one-dimensional mode).
pub fn increment_bounds(kernel: &ModulatedKernel) -> Vec<f64> {
    (0..kernel.n_coords())
        .map(|i| increment_bound_for(kernel, &kernel.coordinate_values(i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakRow {
    pub x: usize,
    pub y: usize,
    pub mass: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    /// `max_i U_i`.
    pub u: f64,
    pub per_coordinate: Vec<f64>,
    /// Y-rows whose folded-back mass exceeds [`LEAK_THRESHOLD`].
    pub leaking_rows: Vec<LeakRow>,
    /// X-states whose folded-back mass exceeds [`LEAK_THRESHOLD`].
    pub leaking_x: Vec<(usize, f64)>,
    pub max_leak: f64,
}

/// Computes `U` and audits truncation leakage.
///
/// Rows at the top of the truncation always fold some mass back. A leaking
/// row whose total L2 level sits more than `increment_cap` below the top
/// level means the truncation cuts into the bulk of the dynamics, which is
/// reported as [`AnalysisError::TruncationTooSmall`].
pub fn check_bounded_increments(
    kernel: &ModulatedKernel,
    increment_cap: f64,
) -> Result<IncrementReport, AnalysisError> {
    let per_coordinate = increment_bounds(kernel);
    let u = per_coordinate.iter().copied().fold(0.0, f64::max);
    let total = kernel.total_l2();
    let top = total.iter().copied().fold(0.0, f64::max);
    let mut leaking_rows = Vec::new();
    let mut leaking_x = Vec::new();
    let mut max_leak: f64 = 0.0;
    if let Some(leak) = kernel.leakage() {
        for (x, &k) in kernel.y_kernel_of().iter().enumerate() {
            for (y, &mass) in leak.y[k].iter().enumerate() {
                max_leak = max_leak.max(mass);
                if mass > LEAK_THRESHOLD {
                    leaking_rows.push(LeakRow {
                        x,
                        y,
                        mass,
                        level: total[y],
                    });
                }
            }
        }
        for (x, &mass) in leak.x.iter().enumerate() {
            max_leak = max_leak.max(mass);
            if mass > LEAK_THRESHOLD {
                leaking_x.push((x, mass));
            }
        }
    }
    if let Some(row) = leaking_rows.iter().find(|r| r.level < top - increment_cap) {
        return Err(AnalysisError::TruncationTooSmall {
            x: row.x,
            y: row.y,
            mass: row.mass,
        });
    }
    Ok(IncrementReport {
        u,
        per_coordinate,
        leaking_rows,
        leaking_x,
        max_leak,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateDrift {
    /// `U_i`.
    pub increment_bound: f64,
    /// `-sum_x pi(x) f_i(x)`.
    pub epsilon: f64,
    pub f: Vec<f64>,
    /// `sup_x |f_i(x)|`.
    pub sup_abs_f: f64,
    /// Distinct Lyapunov levels, ascending.
    pub levels: Vec<f64>,
    /// `h_i` at each level; non-increasing.
    pub h_envelope: Vec<f64>,
    /// Lowest level of the range over which `f_i` was extracted.
    pub top_level: f64,
    /// Lowest level from which `h_i` is zero.
    pub h_zero_level: Option<f64>,
    /// `(x, y)` on the top levels where the one-step drift exceeds `f_i(x)`.
    pub violations: Vec<(usize, usize)>,
}

impl CoordinateDrift {
    /// `h` at an arbitrary level `n`: the envelope value at the smallest
    /// recorded level `>= n` (zero above the truncation).
    pub fn h(&self, n: f64) -> f64 {
        let k = self.levels.partition_point(|&l| l < n);
        self.h_envelope.get(k).copied().unwrap_or(0.0)
    }

    fn passed(&self) -> bool {
        self.epsilon > 0.0 && self.violations.is_empty() && self.h_zero_level.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `max_i U_i`.
    pub u: f64,
    /// `min_i epsilon_i`.
    pub epsilon: f64,
    pub multivariate: bool,
    pub coordinates: Vec<CoordinateDrift>,
    pub stationary: Vec<f64>,
    pub top_fraction: f64,
    pub verdict: Verdict,
}

impl DriftReport {
    pub fn f(&self) -> &[f64] {
        &self.coordinates[0].f
    }

    pub fn h_envelope(&self) -> &[f64] {
        &self.coordinates[0].h_envelope
    }

    /// `min_i epsilon_i / 10`.
    pub fn delta(&self) -> f64 {
        self.epsilon / 10.0
    }

    pub fn violations(&self) -> Vec<(usize, usize, usize)> {
        self.coordinates
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.violations.iter().map(move |&(x, y)| (i, x, y)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOptions {
    pub top_fraction: f64,
    /// Externally supplied `f_i` per coordinate; when absent `f_i` is the
    /// supremum of the drift over the top levels.
    pub f_override: Option<Vec<Vec<f64>>>,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self {
            top_fraction: DEFAULT_TOP_FRACTION,
            f_override: None,
        }
    }
}

fn distinct_levels(values: &[f64]) -> Vec<f64> {
    let mut levels = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

/// Lowest level of the top `fraction` of distinct levels.
pub fn top_level(levels: &[f64], fraction: f64) -> f64 {
    let n = levels.len();
    let keep = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    levels[n - keep]
}

fn coordinate_drift(
    kernel: &ModulatedKernel,
    values: &[f64],
    pi: &[f64],
    options: &DriftOptions,
    f_override: Option<&Vec<f64>>,
) -> Result<CoordinateDrift, AnalysisError> {
    let n_x = kernel.n_x();
    let drift = drift_by_kernel(kernel, values);
    let levels = distinct_levels(values);
    let top = top_level(&levels, options.top_fraction);
    let level_index = |v: f64| levels.partition_point(|&l| l < v);

    let f: Vec<f64> = match f_override {
        Some(f) => {
            if f.len() != n_x {
                return Err(AnalysisError::Dimension(format!(
                    "f has {} entries for {n_x} X-states",
                    f.len()
                )));
            }
            f.clone()
        }
        None => (0..n_x)
            .map(|x| {
                let d = &drift[kernel.y_kernel_of()[x]];
                values
                    .iter()
                    .zip(d)
                    .filter(|(v, _)| **v >= top)
                    .map(|(_, d)| *d)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect(),
    };

    // Excess over f at each level, then the running maximum from the right.
    let mut excess = vec![0.0f64; levels.len()];
    for x in 0..n_x {
        let d = &drift[kernel.y_kernel_of()[x]];
        for (y, &v) in values.iter().enumerate() {
            let e = d[y] - f[x];
            let k = level_index(v);
            excess[k] = excess[k].max(e);
        }
    }
    let mut h_envelope = excess.clone();
    for k in (0..h_envelope.len().saturating_sub(1)).rev() {
        h_envelope[k] = h_envelope[k].max(h_envelope[k + 1]);
    }
    let h_zero_level = levels
        .iter()
        .zip(&h_envelope)
        .find(|(_, h)| **h <= ZERO_TOL)
        .map(|(l, _)| *l)
        .filter(|&l| l <= top);

    // h must vanish over the top levels, so there the inequality has to
    // hold with f alone.
    let mut violations = Vec::new();
    for x in 0..n_x {
        let d = &drift[kernel.y_kernel_of()[x]];
        for (y, &v) in values.iter().enumerate() {
            if v >= top && d[y] > f[x] + ZERO_TOL {
                violations.push((x, y));
            }
        }
    }
    let epsilon = -f.iter().zip(pi).map(|(a, b)| a * b).sum::<f64>();
    Ok(CoordinateDrift {
        increment_bound: increment_bound_for(kernel, values),
        epsilon,
        sup_abs_f: f.iter().map(|v| v.abs()).fold(0.0, f64::max),
        f,
        levels,
        h_envelope,
        top_level: top,
        h_zero_level,
        violations,
    })
}

pub fn verify_drift_condition(
    kernel: &ModulatedKernel,
    options: &DriftOptions,
) -> Result<DriftReport, AnalysisError> {
    if !(options.top_fraction > 0.0 && options.top_fraction <= 1.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "top fraction {} outside (0, 1]",
            options.top_fraction
        )));
    }
    let pi = stationary_distribution(kernel.px(), 1e-9)?;
    let m = kernel.n_coords();
    if let Some(f) = &options.f_override {
        if f.len() != m {
            return Err(AnalysisError::Dimension(format!(
                "f supplied for {} coordinates, kernel has {m}",
                f.len()
            )));
        }
    }
    let coordinates = (0..m)
        .map(|i| {
            coordinate_drift(
                kernel,
                &kernel.coordinate_values(i),
                &pi,
                options,
                options.f_override.as_ref().map(|f| &f[i]),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let verdict = Verdict::from_bool(coordinates.iter().all(CoordinateDrift::passed));
    Ok(DriftReport {
        u: coordinates.iter().map(|c| c.increment_bound).fold(0.0, f64::max),
        epsilon: coordinates.iter().map(|c| c.epsilon).fold(f64::INFINITY, f64::min),
        multivariate: kernel.coords().is_some(),
        coordinates,
        stationary: pi,
        top_fraction: options.top_fraction,
        verdict,
    })
}

/// `E_{x,y} g(X^t, Y^t)` for every `(x, y)`, where `g` is a joint function.
pub fn expected_after(kernel: &ModulatedKernel, g: &[f64], t: usize) -> Vec<f64> {
    let mut v = g.to_vec();
    for _ in 0..t {
        v = kernel.apply_joint(&v);
    }
    v
}

/// Lifts a function of `y` to the joint space.
pub fn lift_y(kernel: &ModulatedKernel, values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(kernel.n_x() * kernel.n_y());
    for _ in 0..kernel.n_x() {
        out.extend_from_slice(values);
    }
    out
}

/// Exact `t`-step drift `E_{x,y} c(Y^t) - c(y)` for every `(x, y)`.
pub fn multi_step_drift_table(kernel: &ModulatedKernel, values: &[f64], t: usize) -> Vec<f64> {
    let g = lift_y(kernel, values);
    expected_after(kernel, &g, t)
        .iter()
        .zip(&g)
        .map(|(a, b)| a - b)
        .collect()
}

/// Exact `t`-step drift of each coordinate from `(x0, y0)`.
pub fn multi_step_drift(
    kernel: &ModulatedKernel,
    x0: usize,
    y0: usize,
    t: usize,
) -> Result<Vec<f64>, AnalysisError> {
    if t == 0 {
        return Err(AnalysisError::InvalidArgument("t must be at least 1".into()));
    }
    if x0 >= kernel.n_x() || y0 >= kernel.n_y() {
        return Err(AnalysisError::InvalidArgument(format!(
            "state ({x0}, {y0}) outside the kernel"
        )));
    }
    let n_y = kernel.n_y();
    let mut dist = vec![0.0; kernel.n_x() * n_y];
    dist[kernel.joint_index(x0, y0)] = 1.0;
    for _ in 0..t {
        dist = kernel.push_joint(&dist);
    }
    Ok((0..kernel.n_coords())
        .map(|i| {
            let c = kernel.coordinate_values(i);
            let expected: f64 = dist
                .iter()
                .enumerate()
                .map(|(k, w)| w * c[k % n_y])
                .sum();
            expected - c[y0]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublinearityReport {
    pub t_grid: Vec<usize>,
    /// `[coordinate][grid index]`: `sup_{x in V, y} drift_i(t) / t`.
    pub values: Vec<Vec<f64>>,
    /// `[coordinate][grid index]`: supremum of `values` over the grid tail.
    pub tail_sup: Vec<Vec<f64>>,
    /// Per coordinate: the tail supremum is non-positive or strictly
    /// shrinks from the first to the last grid point.
    pub decreasing: Vec<bool>,
    pub passes: bool,
}

pub fn sublinearity_check(
    kernel: &ModulatedKernel,
    v: &StateSet,
    t_grid: &[usize],
) -> Result<SublinearityReport, AnalysisError> {
    let mut grid: Vec<usize> = t_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 {
        return Err(AnalysisError::InvalidArgument(
            "t grid must be non-empty with entries >= 1".into(),
        ));
    }
    let n_y = kernel.n_y();
    let t_last = *grid.last().unwrap();
    let mut values = Vec::new();
    for i in 0..kernel.n_coords() {
        let c = kernel.coordinate_values(i);
        let g = lift_y(kernel, &c);
        let mut cur = g.clone();
        let mut row = Vec::with_capacity(grid.len());
        let mut next_grid = 0;
        for t in 1..=t_last {
            cur = kernel.apply_joint(&cur);
            if t == grid[next_grid] {
                let sup = v
                    .members()
                    .iter()
                    .flat_map(|&x| (0..n_y).map(move |y| (x, y)))
                    .map(|(x, y)| {
                        let k = x * n_y + y;
                        (cur[k] - g[k]) / t as f64
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                row.push(sup);
                next_grid += 1;
            }
        }
        values.push(row);
    }
    let tail_sup: Vec<Vec<f64>> = values
        .iter()
        .map(|row| {
            let mut tail = row.clone();
            for k in (0..tail.len().saturating_sub(1)).rev() {
                tail[k] = tail[k].max(tail[k + 1]);
            }
            tail
        })
        .collect();
    let decreasing: Vec<bool> = tail_sup
        .iter()
        .map(|tail| {
            let (first, last) = (tail[0], *tail.last().unwrap());
            last <= ZERO_TOL || last < first - ZERO_TOL
        })
        .collect();
    Ok(SublinearityReport {
        t_grid: grid,
        passes: decreasing.iter().all(|&d| d),
        values,
        tail_sup,
        decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::sparse::CsrMatrix;
    use approx::assert_abs_diff_eq;

    /// Birth-death on `0..n` with the given up/down probabilities; moves
    /// that would leave the range stay put.
    pub(crate) fn birth_death(n: usize, up: f64, down: f64) -> CsrMatrix {
        let rows = (0..n)
            .map(|y| {
                let mut row = vec![(y, 1.0 - up - down)];
                row.push((if y + 1 < n { y + 1 } else { y }, up));
                row.push((y.saturating_sub(1), down));
                row
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn increment_bound_examples() {
        let px = CsrMatrix::identity(1);
        let k = ModulatedKernel::new(px.clone(), vec![CsrMatrix::identity(5)]).unwrap();
        assert_eq!(increment_bounds(&k), vec![0.0]);

        let k = ModulatedKernel::new(px.clone(), vec![birth_death(10, 0.5, 0.5)]).unwrap();
        assert_abs_diff_eq!(increment_bounds(&k)[0], 1.0, epsilon = 1e-15);

        let k = ModulatedKernel::new(px, vec![birth_death(10, 0.3, 0.5)]).unwrap();
        assert_abs_diff_eq!(increment_bounds(&k)[0], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn single_state_negative_drift() {
        let px = CsrMatrix::identity(1);
        let k = ModulatedKernel::new(px, vec![birth_death(40, 0.2, 0.3)]).unwrap();
        let r = verify_drift_condition(&k, &DriftOptions::default()).unwrap();
        assert_abs_diff_eq!(r.f()[0], -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.epsilon, 0.1, epsilon = 1e-12);
        assert_eq!(r.verdict, Verdict::Pass);
        // only level 0 (no downward move) has excess drift
        assert_abs_diff_eq!(r.h_envelope()[0], 0.3, epsilon = 1e-12);
        assert!(r.h_envelope()[1..].iter().all(|&h| h.abs() < 1e-12));
    }

    #[test]
    fn override_reports_violations() {
        let px = CsrMatrix::identity(1);
        let k = ModulatedKernel::new(px, vec![birth_death(20, 0.2, 0.3)]).unwrap();
        let opts = DriftOptions {
            f_override: Some(vec![vec![-0.5]]),
            ..Default::default()
        };
        let r = verify_drift_condition(&k, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(!r.violations().is_empty());
        assert!(r.coordinates[0].h_zero_level.is_none());
        assert_abs_diff_eq!(r.coordinates[0].h(10.0), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn zero_drift_fails() {
        let px = CsrMatrix::identity(1);
        let k = ModulatedKernel::new(px, vec![CsrMatrix::identity(8)]).unwrap();
        let r = verify_drift_condition(&k, &DriftOptions::default()).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert_eq!(r.verdict, Verdict::Fail);
        let d = multi_step_drift(&k, 0, 5, 7).unwrap();
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn multi_step_single_step() {
        let px = CsrMatrix::identity(1);
        let k = ModulatedKernel::new(px, vec![birth_death(20, 0.2, 0.3)]).unwrap();
        assert_abs_diff_eq!(multi_step_drift(&k, 0, 10, 1).unwrap()[0], -0.1, epsilon = 1e-12);
        let table = multi_step_drift_table(&k, k.l2(), 3);
        let direct = multi_step_drift(&k, 0, 10, 3).unwrap()[0];
        assert_abs_diff_eq!(table[10], direct, epsilon = 1e-13);
        assert!(multi_step_drift(&k, 0, 10, 0).is_err());
    }

    #[test]
    fn leak_far_below_top_is_rejected() {
        use crate::analysis::kernel::Leakage;
        let px = CsrMatrix::identity(1);
        let k = ModulatedKernel::new(px, vec![birth_death(10, 0.2, 0.3)]).unwrap();
        let mut y = vec![0.0; 10];
        y[9] = 0.2;
        let ok = k
            .clone()
            .with_leakage(Leakage {
                x: vec![0.0],
                y: vec![y.clone()],
            })
            .unwrap();
        let rep = check_bounded_increments(&ok, 1.0).unwrap();
        assert_eq!(rep.leaking_rows.len(), 1);
        y[2] = 1e-6;
        let bad = k
            .with_leakage(Leakage {
                x: vec![0.0],
                y: vec![y],
            })
            .unwrap();
        assert!(matches!(
            check_bounded_increments(&bad, 1.0),
            Err(AnalysisError::TruncationTooSmall { y: 2, .. })
        ));
    }
}
