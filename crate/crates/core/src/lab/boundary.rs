//! Bisection on `lambda_G` for the empirical stability boundary.

use serde::{Deserialize, Serialize};

use crate::net::{theoretical_threshold, NetworkConfig, Threshold};

use super::classify::{classify_stability, ClassifyOptions, Label, StabilityVerdict};
use super::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionPoint {
    pub lambda_g: f64,
    pub slots: u64,
    pub verdict: StabilityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub lambda_star_empirical: f64,
    pub half_width: f64,
    pub bracket: (f64, f64),
    pub lambda_star_theoretical: Threshold,
    pub config: NetworkConfig,
    pub total_slots: u64,
    /// False when an unresolved midpoint stopped the bisection early.
    pub converged: bool,
    pub points: Vec<BisectionPoint>,
}

struct Runner<'a> {
    template: &'a NetworkConfig,
    opts: &'a ClassifyOptions,
    points: Vec<BisectionPoint>,
    total_slots: u64,
}

impl Runner<'_> {
    fn classify(&mut self, lambda_g: f64, scale: u64) -> Result<Label, LabError> {
        let cfg = self.template.with_lambda_g(lambda_g);
        let opts = ClassifyOptions {
            slots: self.opts.slots * scale,
            warmup: self.opts.warmup.map(|w| w * scale),
            ..self.opts.clone()
        };
        let verdict = classify_stability(&cfg, &opts)?;
        self.total_slots += opts.slots * opts.replications as u64;
        let label = verdict.label;
        self.points.push(BisectionPoint {
            lambda_g,
            slots: opts.slots,
            verdict,
        });
        Ok(label)
    }
}

/// All points share `opts.seed`, so neighbouring rates see common random
/// numbers.
pub fn boundary_bisection(
    template: &NetworkConfig,
    bracket: (f64, f64),
    tol: f64,
    opts: &ClassifyOptions,
) -> Result<BoundaryEstimate, LabError> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || lo < 0.0 {
        return Err(LabError::InvalidArgument(format!(
            "bracket [{lo}, {hi}] must satisfy 0 <= lo < hi"
        )));
    }
    if !(tol > 0.0) {
        return Err(LabError::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let mut run = Runner {
        template,
        opts,
        points: Vec::new(),
        total_slots: 0,
    };
    let at_lo = run.classify(lo, 1)?;
    let at_hi = run.classify(hi, 1)?;
    if at_lo != Label::Stable || at_hi != Label::Unstable {
        return Err(LabError::Bracket(format!(
            "endpoints classify as {at_lo} at {lo} and {at_hi} at {hi}; need STABLE below and UNSTABLE above"
        )));
    }
    let mut converged = true;
    while (hi - lo) / 2.0 > tol {
        let mid = 0.5 * (lo + hi);
        let mut label = run.classify(mid, 1)?;
        if label == Label::Inconclusive {
            label = run.classify(mid, 2)?;
        }
        match label {
            Label::Stable => lo = mid,
            Label::Unstable => hi = mid,
            Label::Inconclusive => {
                converged = false;
                break;
            }
        }
    }
    Ok(BoundaryEstimate {
        lambda_star_empirical: 0.5 * (lo + hi),
        half_width: 0.5 * (hi - lo),
        bracket: (lo, hi),
        lambda_star_theoretical: theoretical_threshold(template),
        config: template.clone(),
        total_slots: run.total_slots,
        converged,
        points: run.points,
    })
}
