//! X-chain quantities: stationary law, first-passage Lyapunov function,
//! convergence curves and minorization.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::kernel::{ModulatedKernel, StateSet};
use super::sparse::CsrMatrix;
use super::AnalysisError;

/// Above this size linear systems are solved iteratively.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;
const ITERATIVE_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 2_000_000;

/// Closed communicating classes, each sorted ascending.
pub fn closed_classes(p: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = p.n_rows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, p.nnz());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for (j, v) in p.row(i) {
            if v > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            comp[node.index()] = c;
        }
    }
    let mut out: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter().all(|node| {
                p.row(node.index())
                    .all(|(j, v)| v <= 0.0 || comp[j] == *c)
            })
        })
        .map(|(_, scc)| {
            let mut members: Vec<usize> = scc.iter().map(|n| n.index()).collect();
            members.sort_unstable();
            members
        })
        .collect();
    out.sort();
    out
}

fn l1_residual(p: &CsrMatrix, pi: &[f64]) -> f64 {
    p.vec_mul(pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Stationary distribution of a chain with a single closed class.
///
/// Direct LU solve of the balance equations up to [`DIRECT_SOLVE_LIMIT`]
/// states, lazy power iteration above. Transient states get mass 0.
pub fn stationary_distribution(p: &CsrMatrix, tol: f64) -> Result<Vec<f64>, AnalysisError> {
    let n = p.n_rows();
    if n == 0 || p.n_cols() != n {
        return Err(AnalysisError::Dimension("stationary distribution needs a square, non-empty matrix".into()));
    }
    let classes = closed_classes(p);
    if classes.len() != 1 {
        return Err(AnalysisError::Ambiguous(classes.len()));
    }
    let class = &classes[0];
    let c = class.len();
    let mut local = vec![usize::MAX; n];
    for (k, &x) in class.iter().enumerate() {
        local[x] = k;
    }

    let pi_class: Vec<f64> = if c <= DIRECT_SOLVE_LIMIT {
        // rows of A are balance equations sum_i pi_i (P_ij - delta_ij) = 0;
        // the last one is replaced by the normalisation.
        let mut a = DMatrix::<f64>::zeros(c, c);
        for (ki, &i) in class.iter().enumerate() {
            for (j, v) in p.row(i) {
                let kj = local[j];
                a[(kj, ki)] += v;
            }
            a[(ki, ki)] -= 1.0;
        }
        for k in 0..c {
            a[(c - 1, k)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(c);
        b[c - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| AnalysisError::Numerical("singular balance system".into()))?;
        sol.iter().map(|v| v.max(0.0)).collect()
    } else {
        let sub = CsrMatrix::from_rows(
            c,
            class
                .iter()
                .map(|&i| p.row(i).map(|(j, v)| (local[j], v)).collect())
                .collect(),
        );
        let mut pi = vec![1.0 / c as f64; c];
        let mut converged = false;
        for _ in 0..MAX_ITERATIONS {
            let next = sub.vec_mul(&pi);
            let resid: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            if resid <= tol.min(ITERATIVE_TOL) {
                pi = next;
                converged = true;
                break;
            }
            // lazy step keeps periodic classes convergent
            pi = pi.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        }
        if !converged {
            return Err(AnalysisError::Numerical("power iteration did not converge".into()));
        }
        pi
    };

    let total: f64 = pi_class.iter().sum();
    let mut pi = vec![0.0; n];
    for (k, &x) in class.iter().enumerate() {
        pi[x] = pi_class[k] / total;
    }
    let resid = l1_residual(p, &pi);
    if resid > tol {
        return Err(AnalysisError::Numerical(format!(
            "stationary residual {resid:e} exceeds tolerance {tol:e}"
        )));
    }
    Ok(pi)
}

/// Averaged Y-kernel `sum_x pi(x) K(x)`.
pub fn averaged_kernel(kernel: &ModulatedKernel) -> Result<CsrMatrix, AnalysisError> {
    let pi = stationary_distribution(kernel.px(), 1e-9)?;
    let mut weights = vec![0.0; kernel.y_kernels().len()];
    for (x, &k) in kernel.y_kernel_of().iter().enumerate() {
        weights[k] += pi[x];
    }
    let parts: Vec<(&CsrMatrix, f64)> = kernel.y_kernels().iter().zip(weights).collect();
    Ok(CsrMatrix::weighted_sum(&parts))
}

/// First-passage Lyapunov function of the X-chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimes {
    /// `E_x tau(V)` off `V`, zero on `V`.
    pub l1: Vec<f64>,
    /// `sup_{x in V} E_x tau(V)` with `tau >= 1` the return time.
    pub s0: f64,
    /// `(x, E_x tau(V))` for each `x` in `V`.
    pub return_times: Vec<(usize, f64)>,
}

impl HittingTimes {
    /// One-step drift `E_x L1(X^1) - L1(x)` for every state.
    pub fn drift(&self, p: &CsrMatrix) -> Vec<f64> {
        p.mul_vec(&self.l1)
            .iter()
            .zip(&self.l1)
            .map(|(a, b)| a - b)
            .collect()
    }
}

fn states_reaching(p: &CsrMatrix, target: &StateSet) -> Vec<bool> {
    let n = p.n_rows();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, v) in p.row(i) {
            if v > 0.0 {
                reverse[j].push(i);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = target.members().to_vec();
    for &x in &stack {
        seen[x] = true;
    }
    while let Some(j) = stack.pop() {
        for &i in &reverse[j] {
            if !seen[i] {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    seen
}

pub fn expected_hitting_time(p: &CsrMatrix, v: &StateSet) -> Result<HittingTimes, AnalysisError> {
    let n = p.n_rows();
    if v.universe() != n {
        return Err(AnalysisError::Dimension(format!(
            "state set over {} states for a {n}-state chain",
            v.universe()
        )));
    }
    let reach = states_reaching(p, v);
    let stuck: Vec<usize> = (0..n).filter(|&x| !reach[x]).collect();
    if !stuck.is_empty() {
        return Err(AnalysisError::InfiniteHittingTime(stuck));
    }

    let outside: Vec<usize> = (0..n).filter(|&x| !v.contains(x)).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &x) in outside.iter().enumerate() {
        local[x] = k;
    }
    let w = outside.len();
    let mut l1 = vec![0.0; n];
    if w > 0 {
        let sol: Vec<f64> = if w <= DIRECT_SOLVE_LIMIT {
            let mut a = DMatrix::<f64>::identity(w, w);
            for (k, &x) in outside.iter().enumerate() {
                for (j, val) in p.row(x) {
                    if local[j] != usize::MAX {
                        a[(k, local[j])] -= val;
                    }
                }
            }
            let b = DVector::<f64>::from_element(w, 1.0);
            a.lu()
                .solve(&b)
                .ok_or_else(|| AnalysisError::Numerical("singular first-passage system".into()))?
                .iter()
                .copied()
                .collect()
        } else {
            // Gauss-Seidel on L(x) = 1 + sum_{x' outside V} P(x,x') L(x')
            let mut sol = vec![0.0; w];
            let mut converged = false;
            for _ in 0..MAX_ITERATIONS {
                let mut delta: f64 = 0.0;
                for (k, &x) in outside.iter().enumerate() {
                    let mut acc = 1.0;
                    let mut diag = 0.0;
                    for (j, val) in p.row(x) {
                        let lj = local[j];
                        if lj == k {
                            diag += val;
                        } else if lj != usize::MAX {
                            acc += val * sol[lj];
                        }
                    }
                    let next = acc / (1.0 - diag);
                    delta = delta.max((next - sol[k]).abs() / next.max(1.0));
                    sol[k] = next;
                }
                if delta < ITERATIVE_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(AnalysisError::Numerical("first-passage iteration did not converge".into()));
            }
            sol
        };
        for (k, &x) in outside.iter().enumerate() {
            l1[x] = sol[k];
        }
    }

    let return_times: Vec<(usize, f64)> = v
        .members()
        .iter()
        .map(|&x| (x, 1.0 + p.row(x).map(|(j, a)| a * l1[j]).sum::<f64>()))
        .collect();
    let s0 = return_times.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(HittingTimes {
        l1,
        s0,
        return_times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    /// `sup_{x in V} E_x L1(X^t)` for `t = 0..=t_max`.
    pub sup_expected: Vec<f64>,
    /// The same divided by `t`, for `t = 1..=t_max` (index 0 unused, set to 0).
    pub ratio: Vec<f64>,
}

pub fn hitting_time_growth(
    p: &CsrMatrix,
    v: &StateSet,
    t_max: usize,
) -> Result<GrowthCurve, AnalysisError> {
    let ht = expected_hitting_time(p, v)?;
    let mut g = ht.l1;
    let mut sup_expected = Vec::with_capacity(t_max + 1);
    let mut ratio = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            g = p.mul_vec(&g);
        }
        let s = v.members().iter().map(|&x| g[x]).fold(f64::NEG_INFINITY, f64::max);
        sup_expected.push(s);
        ratio.push(if t == 0 { 0.0 } else { s / t as f64 });
    }
    Ok(GrowthCurve {
        sup_expected,
        ratio,
    })
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvCurve {
    /// TV distance to the stationary law for `t = 0..=t_max`.
    pub from_initial: Vec<f64>,
    /// `sup_{x in V}` of the same from point masses, when `V` is given.
    pub sup_over_v: Option<Vec<f64>>,
}

pub fn point_mass(n: usize, x: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[x] = 1.0;
    e
}

pub fn tv_distance_curve(
    p: &CsrMatrix,
    initial: &[f64],
    v: Option<&StateSet>,
    t_max: usize,
) -> Result<TvCurve, AnalysisError> {
    let n = p.n_rows();
    if initial.len() != n {
        return Err(AnalysisError::Dimension("initial distribution length mismatch".into()));
    }
    let pi = stationary_distribution(p, 1e-10)?;
    let curve = |start: Vec<f64>| {
        let mut mu = start;
        let mut out = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            if t > 0 {
                mu = p.vec_mul(&mu);
            }
            out.push(total_variation(&mu, &pi));
        }
        out
    };
    let from_initial = curve(initial.to_vec());
    let sup_over_v = v.map(|set| {
        let mut sup = vec![0.0f64; t_max + 1];
        for &x in set.members() {
            for (s, d) in sup.iter_mut().zip(curve(point_mass(n, x))) {
                *s = s.max(d);
            }
        }
        sup
    });
    Ok(TvCurve {
        from_initial,
        sup_over_v,
    })
}

/// Rows `x` of `P^m` for each `x` in `rows`.
pub fn power_rows(p: &CsrMatrix, rows: &[usize], m: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&x| {
            let mut mu = point_mass(p.n_rows(), x);
            for _ in 0..m {
                mu = p.vec_mul(&mu);
            }
            mu
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minorization {
    pub p: f64,
    pub mu: Vec<f64>,
    pub m: usize,
}

pub const MAX_MINORIZATION_STEPS: usize = 64;

/// Largest `p * mu` lying under every row `P^m(x, .)`, `x` in `V`.
pub fn check_minorization(
    px: &CsrMatrix,
    v: &StateSet,
    m: usize,
) -> Result<Option<Minorization>, AnalysisError> {
    if !(1..=MAX_MINORIZATION_STEPS).contains(&m) {
        return Err(AnalysisError::InvalidArgument(format!(
            "minorization step count {m} outside 1..={MAX_MINORIZATION_STEPS}"
        )));
    }
    let rows = power_rows(px, v.members(), m);
    let n = px.n_rows();
    let raw: Vec<f64> = (0..n)
        .map(|j| rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let p: f64 = raw.iter().sum();
    if p <= 0.0 {
        return Ok(None);
    }
    Ok(Some(Minorization {
        p: p.min(1.0),
        mu: raw.iter().map(|r| r / p).collect(),
        m,
    }))
}
