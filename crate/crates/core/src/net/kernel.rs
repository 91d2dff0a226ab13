//! Truncated network kernel in the modulated-chain form.
//!
//! `X = (phase, R_1..R_M)` where `phase = (t - 1) mod M` names the owner of
//! the slot, so `n_x = M (R_cap + 1)^M`. `Y = (G_1..G_M)` with
//! `n_y = (G_cap + 1)^M`. Queues that would pass their cap are reflected
//! onto it and the reflected mass is recorded as leakage. The Y-step from
//! `x` depends only on the phase and on whether the owner holds red
//! messages, so `2M` Y-kernels are shared across the X-states.

use serde::{Deserialize, Serialize};

use crate::analysis::kernel::{CoordinateMap, Leakage, ModulatedKernel, StateSet};
use crate::analysis::sparse::CsrMatrix;

use super::{Mode, NetError, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelBudget {
    /// Largest admissible `n_x * n_y`.
    pub max_joint_states: u64,
}

impl Default for KernelBudget {
    fn default() -> Self {
        Self {
            max_joint_states: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedKernel {
    pub kernel: ModulatedKernel,
    pub m: usize,
    pub r_cap: u64,
    pub g_cap: u64,
}

impl TruncatedKernel {
    /// X-state index of `(phase, R)`.
    pub fn x_index(&self, phase: usize, r: &[u64]) -> usize {
        phase * (self.r_cap as usize + 1).pow(self.m as u32) + encode(r, self.r_cap)
    }

    pub fn y_index(&self, g: &[u64]) -> usize {
        encode(g, self.g_cap)
    }

    /// States with no red message anywhere.
    pub fn empty_red(&self) -> StateSet {
        empty_red_set(self.m, self.r_cap)
    }
}

fn encode(v: &[u64], cap: u64) -> usize {
    v.iter()
        .rev()
        .fold(0, |acc, &c| acc * (cap as usize + 1) + c as usize)
}

fn decode(mut k: usize, m: usize, cap: u64) -> Vec<u64> {
    (0..m)
        .map(|_| {
            let c = k % (cap as usize + 1);
            k /= cap as usize + 1;
            c as u64
        })
        .collect()
}

/// `{(phase, 0, .., 0)}` for every phase.
pub fn empty_red_set(m: usize, r_cap: u64) -> StateSet {
    let block = (r_cap as usize + 1).pow(m as u32);
    StateSet::new(m * block, (0..m).map(|ph| ph * block)).expect("non-empty")
}

/// Arrival vectors with their probabilities: batch law times a uniform
/// multinomial split.
fn arrival_vectors(pmf: &[f64], m: usize) -> Vec<(Vec<u64>, f64)> {
    let mut out = Vec::new();
    for (k, &pk) in pmf.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        let mut parts = vec![0u64; m];
        compositions(k as u64, 0, &mut parts, &mut |v| {
            out.push((v.to_vec(), pk * multinomial(v)));
        });
    }
    out
}

fn compositions(left: u64, i: usize, parts: &mut [u64], f: &mut impl FnMut(&[u64])) {
    if i + 1 == parts.len() {
        parts[i] = left;
        f(parts);
        return;
    }
    for a in 0..=left {
        parts[i] = a;
        compositions(left - a, i + 1, parts, f);
    }
}

/// `k! / prod(a_i!) * M^-k`.
fn multinomial(v: &[u64]) -> f64 {
    let m = v.len() as f64;
    let mut ln = 0.0;
    let mut total = 0;
    for &a in v {
        for j in 1..=a {
            total += 1;
            ln += (total as f64).ln() - (j as f64).ln();
        }
    }
    (ln - total as f64 * m.ln()).exp()
}

/// Adds `a` to `base`, reflecting at `cap`; returns whether any part hit the
/// reflection.
fn add_reflect(base: &[u64], a: &[u64], cap: u64, out: &mut [u64]) -> bool {
    let mut leaked = false;
    for i in 0..base.len() {
        let v = base[i] + a[i];
        if v > cap {
            leaked = true;
        }
        out[i] = v.min(cap);
    }
    leaked
}

pub fn build_truncated_kernel(
    config: &NetworkConfig,
    r_cap: u64,
    g_cap: u64,
    budget: KernelBudget,
) -> Result<TruncatedKernel, NetError> {
    config.validate()?;
    if config.mode != Mode::Coordinator {
        return Err(NetError::Unsupported(
            "without a coordinator the red queues are not autonomous; no modulated kernel exists"
                .into(),
        ));
    }
    let m = config.m;
    if m > 1 && !config.dummy {
        return Err(NetError::Unsupported(
            "for M > 1 the kernel is built for the dummy-packet chain; set dummy = true".into(),
        ));
    }
    let block = (r_cap + 1).checked_pow(m as u32);
    let n_y = (g_cap + 1).checked_pow(m as u32);
    let required = block
        .and_then(|b| b.checked_mul(m as u64))
        .and_then(|nx| n_y.and_then(|ny| nx.checked_mul(ny)))
        .unwrap_or(u64::MAX);
    if required > budget.max_joint_states {
        return Err(NetError::BudgetExceeded {
            required,
            budget: budget.max_joint_states,
        });
    }
    let block = block.unwrap() as usize;
    let n_y = n_y.unwrap() as usize;
    let n_x = m * block;
    let law = config.arrival_law;
    let red = arrival_vectors(&law.pmf(config.lambda_r), m);
    let green = arrival_vectors(&law.pmf(config.lambda_g), m);

    let mut x_rows = Vec::with_capacity(n_x);
    let mut x_leak = vec![0.0; n_x];
    let mut y_kernel_of = Vec::with_capacity(n_x);
    let mut buf = vec![0u64; m];
    for x in 0..n_x {
        let phase = x / block;
        let mut r = decode(x % block, m, r_cap);
        let busy = r[phase] > 0;
        y_kernel_of.push(2 * phase + busy as usize);
        if busy {
            r[phase] -= 1;
        }
        let next_phase = (phase + 1) % m;
        let mut row = Vec::with_capacity(red.len());
        for (a, pa) in &red {
            if add_reflect(&r, a, r_cap, &mut buf) {
                x_leak[x] += pa;
            }
            row.push((next_phase * block + encode(&buf, r_cap), *pa));
        }
        x_rows.push(row);
    }
    let px = CsrMatrix::from_rows(n_x, x_rows);

    let p = config.p;
    let mut y_kernels = Vec::with_capacity(2 * m);
    let mut y_leak = Vec::with_capacity(2 * m);
    for id in 0..2 * m {
        let (phase, busy) = (id / 2, id % 2 == 1);
        let eligible = if busy { m - 1 } else { m };
        let solo = if eligible == 0 {
            0.0
        } else {
            p * (1.0 - p).powi(eligible as i32 - 1)
        };
        let mut leak = vec![0.0; n_y];
        let mut rows = Vec::with_capacity(n_y);
        for (y, leak_y) in leak.iter_mut().enumerate() {
            let g = decode(y, m, g_cap);
            // (queue that loses a message, probability)
            let mut departures: Vec<(Option<usize>, f64)> = Vec::with_capacity(m + 1);
            let mut stay = 1.0;
            for j in 0..m {
                if busy && j == phase {
                    continue;
                }
                if g[j] > 0 {
                    departures.push((Some(j), solo));
                    stay -= solo;
                }
            }
            departures.push((None, stay));
            let mut row = Vec::with_capacity(departures.len() * green.len());
            let mut base = g.clone();
            for &(dep, pd) in &departures {
                base.copy_from_slice(&g);
                if let Some(j) = dep {
                    base[j] -= 1;
                }
                for (a, pa) in &green {
                    if add_reflect(&base, a, g_cap, &mut buf) {
                        *leak_y += pd * pa;
                    }
                    row.push((encode(&buf, g_cap), pd * pa));
                }
            }
            rows.push(row);
        }
        y_kernels.push(CsrMatrix::from_rows(n_y, rows));
        y_leak.push(leak);
    }

    let coord_values: Vec<f64> = (0..n_y)
        .flat_map(|y| decode(y, m, g_cap).into_iter().map(|c| c as f64))
        .collect();
    let l2: Vec<f64> = (0..n_y)
        .map(|y| decode(y, m, g_cap).iter().sum::<u64>() as f64)
        .collect();
    let kernel = ModulatedKernel::with_shared(px, y_kernels, y_kernel_of)?
        .with_l2(l2)?
        .with_coords(CoordinateMap::new(m, coord_values)?)?
        .with_leakage(Leakage {
            x: x_leak,
            y: y_leak,
        })?;
    Ok(TruncatedKernel {
        kernel,
        m,
        r_cap,
        g_cap,
    })
}
