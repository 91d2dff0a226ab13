//! Subcommand bodies. Each takes the resolved config and its output
//! directory and returns a one-line summary for stdout.

use std::path::Path;

use mmstab::analysis::certificate::{foster_certificate_with, CertificateOptions};
use mmstab::analysis::drift::{check_bounded_increments, verify_drift_condition, DriftOptions};
use mmstab::analysis::io::{read_kernel, write_kernel};
use mmstab::analysis::{CsrMatrix, StateSet};
use mmstab::chain::{trajectory, RandomStream};
use mmstab::fsutil::write_atomic;
use mmstab::lab::report::{emit_report, merge_tables};
use mmstab::lab::{boundary_bisection, idle_prob_empirical, sweep, ClassifyOptions, SweepRow};
use mmstab::net::{
    build_truncated_kernel, theoretical_threshold, write_trace, KernelBudget, Network, NetworkState,
    Threshold,
};
use mmstab::regen::{build_split_kernel, estimate_coupling_tail, idle_probability_check, IncrementLaw};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

pub const KERNEL_FILE: &str = "kernel.json";

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(&path, e))?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes).map_err(|e| CliError::io(&path, e))
}

fn classify_options(cfg: &RunConfig) -> ClassifyOptions {
    ClassifyOptions {
        slots: cfg.classify.slots,
        replications: cfg.classify.reps,
        warmup: cfg.classify.warmup,
        seed: cfg.seed,
    }
}

pub fn threshold(cfg: &RunConfig) -> Result<String, CliError> {
    let net = cfg.network.build()?;
    match theoretical_threshold(&net) {
        Threshold::Critical(v) => Ok(format!("{v}")),
        Threshold::Infeasible => Err(CliError::Infeasible(format!(
            "lambda_R = {} leaves no capacity for green traffic in {} mode with p = {}",
            net.lambda_r, net.mode, net.p
        ))),
    }
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let net = cfg.network.build()?;
    let model = Network::new(net.clone())?;
    let mut rng = RandomStream::new(cfg.seed, 0);
    let traj = trajectory(
        &model,
        NetworkState::empty(net.m),
        cfg.simulate.slots,
        cfg.simulate.thinning,
        &mut rng,
    )?;
    let mut buf = Vec::new();
    write_trace(&mut buf, &traj)?;
    let path = out.join("trace.csv");
    write_atomic(&path, &buf).map_err(|e| CliError::io(&path, e))?;
    let last = traj.states.last().expect("trajectory holds its initial state");
    Ok(format!(
        "simulated {} slots; final red {}, green {}; trace at {}",
        traj.slot_index,
        last.total_red(),
        last.total_green(),
        path.display()
    ))
}

pub fn verify(cfg: &mut RunConfig, out: &Path) -> Result<String, CliError> {
    let (kernel, v) = match &cfg.verify.kernel {
        Some(path) => {
            let kernel = read_kernel(path)?;
            let members = cfg.verify.v.clone().ok_or_else(|| {
                CliError::Config("verify.v is required when verifying a kernel file".into())
            })?;
            let v = StateSet::new(kernel.n_x(), members)?;
            (kernel, v)
        }
        None => {
            let net = cfg.network.build()?;
            let budget = KernelBudget {
                max_joint_states: cfg.verify.max_joint_states,
            };
            let built = build_truncated_kernel(&net, cfg.verify.r_cap, cfg.verify.g_cap, budget)?;
            let v = cfg
                .verify
                .v
                .as_ref()
                .map(|m| StateSet::new(built.kernel.n_x(), m.iter().copied()))
                .transpose()?
                .unwrap_or_else(|| built.empty_red());
            let path = out.join(KERNEL_FILE);
            write_kernel(&path, &built.kernel)?;
            (built.kernel, v)
        }
    };
    cfg.verify.v = Some(v.members().to_vec());
    let increments = check_bounded_increments(&kernel, cfg.verify.increment_cap)?;
    let drift = verify_drift_condition(
        &kernel,
        &DriftOptions {
            top_fraction: cfg.verify.top_fraction,
            f_override: None,
        },
    )?;
    let h = cfg
        .verify
        .h
        .unwrap_or(2.0 * kernel.n_coords() as f64 * increments.u + 0.1);
    cfg.verify.h = Some(h);
    let opts = CertificateOptions {
        t_grid: cfg.verify.t_grid.clone(),
        top_fraction: cfg.verify.top_fraction,
    };
    let cert = foster_certificate_with(&kernel, &v, h, &opts, &drift)?;
    write_json(out, "increments.json", &increments)?;
    write_json(out, "drift.json", &drift)?;
    write_json(out, "certificate.json", &cert)?;
    let mut line = format!(
        "drift {} (epsilon {:.6}); certificate {}",
        drift.verdict, drift.epsilon, cert.verdict
    );
    if let (Some(t1), Some(n0)) = (cert.t1, cert.n0) {
        line.push_str(&format!(" with t1 = {t1}, N0 = {n0}"));
    }
    if let Some(f) = &cert.failure {
        line.push_str(&format!(": {f}"));
    }
    Ok(line)
}

pub fn coupling(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let c = &cfg.coupling;
    let px = match &c.kernel {
        Some(path) => read_kernel(path)?.px().clone(),
        None => {
            let n = c.matrix.len();
            if n == 0 || c.matrix.iter().any(|r| r.len() != n) {
                return Err(CliError::Config("coupling.matrix must be square".into()));
            }
            CsrMatrix::from_row_vecs(&c.matrix)
        }
    };
    let v = StateSet::new(px.n_rows(), c.v.iter().copied())?;
    let split = build_split_kernel(&px, &v, c.m)?;
    let report = estimate_coupling_tail(&split, c.t_max, c.reps, cfg.seed)?;
    write_json(out, "coupling.json", &json!({ "split": split.summary(), "report": report }))?;
    let below = report
        .time_below(0.01)
        .map_or("not within the horizon".to_string(), |t| format!("from t = {t}"));
    Ok(format!(
        "p = {:.6}; E kappa = {:.4} +- {:.4}; delta_t <= 0.01 {below}",
        split.p(),
        report.kappa_mean,
        report.kappa_std_error
    ))
}

pub fn idle(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let net = cfg.network.build()?;
    let network = idle_prob_empirical(&net, cfg.idle.slots, cfg.idle.warmup, cfg.seed)?;
    for w in &network.warnings {
        eprintln!("warning: {w}");
    }
    let synthetic = cfg
        .idle
        .synthetic
        .iter()
        .enumerate()
        .map(|(k, pmf)| {
            let law = IncrementLaw::new(pmf.clone())?;
            Ok(idle_probability_check(&law, cfg.idle.slots, cfg.idle.warmup, cfg.seed + k as u64)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_json(out, "idle.json", &json!({ "network": network, "synthetic": synthetic }))?;
    let reference = network
        .reference
        .map_or("none".to_string(), |r| format!("{r:.4}"));
    Ok(format!(
        "scheduled-station idle fraction {:.4} (reference {reference}); {} synthetic checks",
        network.estimate,
        synthetic.len()
    ))
}

pub fn sweep_cmd(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let net = cfg.network.build()?;
    if cfg.sweep.lambda_g.is_empty() {
        return Err(CliError::Config("sweep.lambda_g is empty".into()));
    }
    let rows = sweep(&net, &cfg.sweep.lambda_g, &classify_options(cfg))?;
    let paths = emit_report(&rows, cfg, &[], out)?;
    Ok(format!("{} rows written to {}", rows.len(), paths.table.display()))
}

pub fn boundary(cfg: &mut RunConfig, out: &Path) -> Result<String, CliError> {
    let net = cfg.network.build()?;
    let theory = theoretical_threshold(&net);
    let bracket = match (cfg.boundary.bracket, theory) {
        (Some(b), _) => b,
        (None, Threshold::Critical(v)) => (0.4 * v, 1.6 * v),
        (None, Threshold::Infeasible) => {
            return Err(CliError::Infeasible(format!(
                "no theoretical threshold for lambda_R = {} and p = {} in {} mode; give boundary.bracket",
                net.lambda_r, net.p, net.mode
            )))
        }
    };
    cfg.boundary.bracket = Some(bracket);
    let est = boundary_bisection(&net, bracket, cfg.boundary.tol, &classify_options(cfg))?;
    let rows: Vec<SweepRow> = est
        .points
        .iter()
        .map(|pt| SweepRow {
            mode: net.mode,
            m: net.m,
            p: net.p,
            lambda_r: net.lambda_r,
            lambda_g: pt.lambda_g,
            slots: pt.slots,
            seed: cfg.seed,
            slope: pt.verdict.slope,
            slope_ci_lo: pt.verdict.slope_ci.0,
            slope_ci_hi: pt.verdict.slope_ci.1,
            return_freq: pt.verdict.return_freq,
            verdict: pt.verdict.label,
            threshold_theoretical: theory.value(),
        })
        .collect();
    let mut notes = Vec::new();
    if !est.converged {
        notes.push("bisection stopped at an unresolved midpoint".to_string());
    }
    emit_report(&rows, cfg, &notes, out)?;
    write_json(out, "boundary.json", &est)?;
    let theory_text = theory
        .value()
        .map_or("INFEASIBLE".to_string(), |v| format!("{v:.4}"));
    Ok(format!(
        "lambda_G* = {:.4} +- {:.4} (theory {theory_text}){}",
        est.lambda_star_empirical,
        est.half_width,
        if est.converged { "" } else { ", not converged" }
    ))
}

pub fn report(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    if cfg.report.tables.is_empty() {
        return Err(CliError::Config("no tables to merge".into()));
    }
    let rows = merge_tables(&cfg.report.tables)?;
    let paths = emit_report(&rows, cfg, &[], out)?;
    Ok(format!(
        "merged {} tables into {} rows at {}",
        cfg.report.tables.len(),
        rows.len(),
        paths.table.display()
    ))
}
