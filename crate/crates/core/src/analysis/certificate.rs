//! Extended Foster certificate for the joint chain.
//!
//! The test function is `L(x, y) = H L1(x) + sum_i L2_i(y_i)` with `L1` the
//! first-passage time to `V`. The state-dependent horizon is `T = 1` on
//! `D = V x {sum_i L2_i <= M N0}` and off `V`, and `T = t1` on `V` above
//! level `M N0`. The certificate holds when, on the whole truncation,
//!
//! * (a) on `D`: one-step drift `<= H s0 + M U`,
//! * (b) off `V`: one-step drift `<= -H + M U < 0`,
//! * (c) on `V` above `M N0`: `t1`-step drift `<= -t1 Delta / (2M)`,
//!
//! with `Delta = epsilon / 10` from the drift report.

use serde::{Deserialize, Serialize};

use super::drift::{
    expected_after, lift_y, verify_drift_condition, DriftOptions, DriftReport, Verdict,
    DEFAULT_TOP_FRACTION,
};
use super::kernel::{ModulatedKernel, StateSet};
use super::markov::expected_hitting_time;
use super::AnalysisError;

const TOL: f64 = 1e-9;

pub const DEFAULT_T_GRID: &[usize] = &[
    1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 25, 32, 40, 50, 64, 80, 100, 128, 160, 200, 256,
];

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateOptions {
    pub t_grid: Vec<usize>,
    pub top_fraction: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            t_grid: DEFAULT_T_GRID.to_vec(),
            top_fraction: DEFAULT_TOP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCheck {
    pub name: String,
    pub holds: bool,
    /// Largest left-hand side over the states the case covers.
    pub worst_lhs: f64,
    /// Right-hand side (per step for case (c), scaled by `T` in the table).
    pub bound: f64,
    pub worst_state: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    pub x: usize,
    pub y: usize,
    /// `T(x, y)`.
    pub steps: usize,
    /// `E_{x,y} L(X^T, Y^T) - L(x, y)`.
    pub lhs: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `t1`-step drift of every coordinate `<= -t1 Delta` on `V` from level `N0`.
    pub multi_step_drift: bool,
    /// `sup_{x in V} E_x L1(X^t1) / t1 <= Delta / (2H)`.
    pub first_passage_growth: bool,
    /// `t1`-step drift of every coordinate `<= t1 Delta / (2M)` on `V`.
    pub sublinear_drift: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FosterCertificate {
    pub h: f64,
    pub m: usize,
    pub v: Vec<usize>,
    pub u: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub s0: f64,
    pub t1: Option<usize>,
    pub n0: Option<f64>,
    /// `M N0`.
    pub n1: Option<f64>,
    /// Smallest verified decrease rate per step, when the certificate holds.
    pub c: Option<f64>,
    /// `sup_{(x,y) in D} E_{x,y} L(X^1, Y^1)`.
    pub sup_expected_on_d: Option<f64>,
    pub cases: Vec<CaseCheck>,
    pub diagnostics: Option<Diagnostics>,
    pub drift_table: Vec<DriftEntry>,
    pub verdict: Verdict,
    pub failure: Option<String>,
}

impl FosterCertificate {
    /// `T(x, y)` of the certificate.
    pub fn steps(&self, x: usize, total_l2: f64) -> usize {
        match (self.t1, self.n1) {
            (Some(t1), Some(n1)) if self.v.contains(&x) && total_l2 > n1 => t1,
            _ => 1,
        }
    }
}

pub fn foster_certificate(
    kernel: &ModulatedKernel,
    v: &StateSet,
    h: f64,
    options: &CertificateOptions,
) -> Result<FosterCertificate, AnalysisError> {
    let drift = verify_drift_condition(
        kernel,
        &DriftOptions {
            top_fraction: options.top_fraction,
            f_override: None,
        },
    )?;
    foster_certificate_with(kernel, v, h, options, &drift)
}

/// Same as [`foster_certificate`] with a precomputed drift report.
pub fn foster_certificate_with(
    kernel: &ModulatedKernel,
    v: &StateSet,
    h: f64,
    options: &CertificateOptions,
    drift: &DriftReport,
) -> Result<FosterCertificate, AnalysisError> {
    let n_x = kernel.n_x();
    let n_y = kernel.n_y();
    let m = kernel.n_coords();
    let u = drift.u;
    if !(h > m as f64 * u) {
        return Err(AnalysisError::InvalidArgument(format!(
            "H = {h} must exceed M U = {}",
            m as f64 * u
        )));
    }
    let mut grid = options.t_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    grid.retain(|&t| t > 0);
    if grid.is_empty() {
        return Err(AnalysisError::InvalidArgument("empty t grid".into()));
    }

    let ht = expected_hitting_time(kernel.px(), v)?;
    let epsilon = drift.epsilon;
    let delta = epsilon / 10.0;
    let mf = m as f64;
    let total = kernel.total_l2();
    let mut l = Vec::with_capacity(n_x * n_y);
    for x in 0..n_x {
        for &t in &total {
            l.push(h * ht.l1[x] + t);
        }
    }
    let one_step = kernel.apply_joint(&l);
    let drift1: Vec<f64> = one_step.iter().zip(&l).map(|(a, b)| a - b).collect();

    // (b) off V
    let bound_b = -h + mf * u;
    let mut case_b = CaseCheck {
        name: "off V: one-step drift <= -H + M U".into(),
        holds: true,
        worst_lhs: f64::NEG_INFINITY,
        bound: bound_b,
        worst_state: None,
    };
    for x in (0..n_x).filter(|&x| !v.contains(x)) {
        for y in 0..n_y {
            let d = drift1[x * n_y + y];
            if d > case_b.worst_lhs {
                case_b.worst_lhs = d;
                case_b.worst_state = Some((x, y));
            }
        }
    }
    case_b.holds = case_b.worst_state.is_none()
        || (case_b.worst_lhs <= bound_b + TOL && case_b.worst_lhs < 0.0);

    // (c) on V above M N0; search the grid for the first t1 that works with
    // N0 no higher than the bottom of the top-level range.
    let n0_cap = drift
        .coordinates
        .iter()
        .map(|c| c.top_level)
        .fold(f64::INFINITY, f64::min);
    let bound_c = -delta / (2.0 * mf);
    let t_last = *grid.last().unwrap();
    let mut cur = l.clone();
    let mut found: Option<(usize, f64, Vec<f64>)> = None;
    let mut tightest: Option<(f64, usize, usize, usize)> = None;
    let mut next = 0;
    for t in 1..=t_last {
        cur = kernel.apply_joint(&cur);
        if t != grid[next] {
            continue;
        }
        next += 1;
        let bound = bound_c * t as f64;
        let mut needed: f64 = 0.0;
        for &x in v.members() {
            for y in 0..n_y {
                let k = x * n_y + y;
                let lhs = cur[k] - l[k];
                if lhs > bound + TOL {
                    needed = needed.max(total[y] / mf);
                    if total[y] > mf * n0_cap {
                        let excess = (lhs - bound) / t as f64;
                        if t == t_last && tightest.is_none_or(|(e, ..)| excess > e) {
                            tightest = Some((excess, t, x, y));
                        }
                    }
                }
            }
        }
        if needed <= n0_cap {
            let deltas: Vec<f64> = cur.iter().zip(&l).map(|(a, b)| a - b).collect();
            found = Some((t, needed, deltas));
            break;
        }
    }

    let mut cases = Vec::new();
    let mut drift_table = Vec::new();
    let mut failure = None;
    let (t1, n0, n1, c, sup_on_d, diagnostics, case_c, case_a);
    match found {
        Some((t, n0_found, deltas)) => {
            let n1_found = mf * n0_found;
            let in_d = |x: usize, y: usize| v.contains(x) && total[y] <= n1_found;
            let bound_a = h * ht.s0 + mf * u;
            let mut ca = CaseCheck {
                name: "on D: one-step drift <= H s0 + M U".into(),
                holds: true,
                worst_lhs: f64::NEG_INFINITY,
                bound: bound_a,
                worst_state: None,
            };
            let mut cc = CaseCheck {
                name: "on V above M N0: t1-step drift <= -t1 Delta / (2M)".into(),
                holds: true,
                worst_lhs: f64::NEG_INFINITY,
                bound: bound_c,
                worst_state: None,
            };
            let mut sup_d = f64::NEG_INFINITY;
            let mut rate = f64::INFINITY;
            for x in 0..n_x {
                for y in 0..n_y {
                    let k = x * n_y + y;
                    if in_d(x, y) {
                        sup_d = sup_d.max(one_step[k]);
                        if drift1[k] > ca.worst_lhs {
                            ca.worst_lhs = drift1[k];
                            ca.worst_state = Some((x, y));
                        }
                        drift_table.push(DriftEntry {
                            x,
                            y,
                            steps: 1,
                            lhs: drift1[k],
                            bound: bound_a,
                        });
                    } else if v.contains(x) {
                        let per_step = deltas[k] / t as f64;
                        rate = rate.min(-per_step);
                        if per_step > cc.worst_lhs {
                            cc.worst_lhs = per_step;
                            cc.worst_state = Some((x, y));
                        }
                        drift_table.push(DriftEntry {
                            x,
                            y,
                            steps: t,
                            lhs: deltas[k],
                            bound: bound_c * t as f64,
                        });
                    } else {
                        rate = rate.min(-drift1[k]);
                        drift_table.push(DriftEntry {
                            x,
                            y,
                            steps: 1,
                            lhs: drift1[k],
                            bound: bound_b,
                        });
                    }
                }
            }
            ca.holds = ca.worst_lhs <= bound_a + TOL;
            cc.holds = cc.worst_state.is_none() || cc.worst_lhs <= bound_c + TOL;
            diagnostics = Some(diagnose(kernel, v, h, delta, t, n0_found, &ht.l1));
            t1 = Some(t);
            n0 = Some(n0_found);
            n1 = Some(n1_found);
            c = Some(rate).filter(|r| r.is_finite() && *r > 0.0);
            sup_on_d = Some(sup_d);
            case_a = ca;
            case_c = cc;
        }
        None => {
            let (worst_lhs, worst_state) = match tightest {
                Some((e, _, x, y)) => (bound_c + e, Some((x, y))),
                None => (f64::INFINITY, None),
            };
            failure = Some(match tightest {
                Some((e, t, x, y)) => format!(
                    "no (t1, N0) in the grids: at t = {t}, state ({x}, {y}) misses the \
                     multi-step bound by {e:.6} per step"
                ),
                None => "no (t1, N0) in the grids".into(),
            });
            case_a = CaseCheck {
                name: "on D: one-step drift <= H s0 + M U".into(),
                holds: false,
                worst_lhs: f64::NAN,
                bound: h * ht.s0 + mf * u,
                worst_state: None,
            };
            case_c = CaseCheck {
                name: "on V above M N0: t1-step drift <= -t1 Delta / (2M)".into(),
                holds: false,
                worst_lhs,
                bound: bound_c,
                worst_state,
            };
            t1 = None;
            n0 = None;
            n1 = None;
            c = None;
            sup_on_d = None;
            diagnostics = None;
        }
    }
    cases.push(case_a);
    cases.push(case_b);
    cases.push(case_c);

    let drift_ok = drift.verdict.passed();
    if !drift_ok && failure.is_none() {
        failure = Some(format!(
            "averaged drift condition fails (epsilon = {epsilon:.6})"
        ));
    } else if !drift_ok {
        failure = failure.map(|f| format!("averaged drift condition fails (epsilon = {epsilon:.6}); {f}"));
    }
    if failure.is_none() {
        if let Some(bad) = cases.iter().find(|c| !c.holds) {
            failure = Some(format!("case violated: {}", bad.name));
        }
    }
    let verdict = Verdict::from_bool(failure.is_none() && c.is_some());
    if verdict == Verdict::Fail && failure.is_none() {
        failure = Some("no positive decrease rate".into());
    }
    Ok(FosterCertificate {
        h,
        m,
        v: v.members().to_vec(),
        u,
        epsilon,
        delta,
        s0: ht.s0,
        t1,
        n0,
        n1,
        c,
        sup_expected_on_d: sup_on_d,
        cases,
        diagnostics,
        drift_table,
        verdict,
        failure,
    })
}

fn diagnose(
    kernel: &ModulatedKernel,
    v: &StateSet,
    h: f64,
    delta: f64,
    t1: usize,
    n0: f64,
    l1: &[f64],
) -> Diagnostics {
    let n_y = kernel.n_y();
    let mf = kernel.n_coords() as f64;
    let mut multi = true;
    let mut sub = true;
    for i in 0..kernel.n_coords() {
        let c = kernel.coordinate_values(i);
        let g = lift_y(kernel, &c);
        let after = expected_after(kernel, &g, t1);
        for &x in v.members() {
            for y in 0..n_y {
                let k = x * n_y + y;
                let d = after[k] - g[k];
                if c[y] >= n0 && d > -(t1 as f64) * delta + TOL {
                    multi = false;
                }
                if d > t1 as f64 * delta / (2.0 * mf) + TOL {
                    sub = false;
                }
            }
        }
    }
    let mut g = l1.to_vec();
    for _ in 0..t1 {
        g = kernel.px().mul_vec(&g);
    }
    let growth = v.members().iter().map(|&x| g[x]).fold(0.0, f64::max) / t1 as f64;
    Diagnostics {
        multi_step_drift: multi,
        first_passage_growth: growth <= delta / (2.0 * h) + TOL,
        sublinear_drift: sub,
    }
}
