//! Run configuration: one TOML file per run, overridden by flags.

use std::path::{Path, PathBuf};

use mmstab::net::{ArrivalLaw, Mode, NetworkConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const OUT_ENV: &str = "MMSTAB_OUT";
pub const DEFAULT_OUT: &str = "mmstab-out";
pub const ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 means all available cores.
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub network: NetworkSection,
    pub simulate: SimulateSection,
    pub verify: VerifySection,
    pub coupling: CouplingSection,
    pub idle: IdleSection,
    pub classify: ClassifySection,
    pub sweep: SweepSection,
    pub boundary: BoundarySection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            jobs: 0,
            out: None,
            network: NetworkSection::default(),
            simulate: SimulateSection::default(),
            verify: VerifySection::default(),
            coupling: CouplingSection::default(),
            idle: IdleSection::default(),
            classify: ClassifySection::default(),
            sweep: SweepSection::default(),
            boundary: BoundarySection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    #[serde(rename = "M")]
    pub m: usize,
    pub p: f64,
    #[serde(rename = "lambda_R")]
    pub lambda_r: f64,
    #[serde(rename = "lambda_G")]
    pub lambda_g: f64,
    pub mode: Mode,
    pub dummy: bool,
    pub arrival_law: ArrivalLaw,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            m: 1,
            p: 0.3,
            lambda_r: 0.5,
            lambda_g: 0.1,
            mode: Mode::Coordinator,
            dummy: false,
            arrival_law: ArrivalLaw::Poisson,
        }
    }
}

impl NetworkSection {
    pub fn build(&self) -> Result<NetworkConfig, CliError> {
        Ok(NetworkConfig::new(
            self.m,
            self.p,
            self.lambda_r,
            self.lambda_g,
            self.mode,
            self.dummy,
            self.arrival_law,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub slots: u64,
    pub thinning: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            slots: 10_000,
            thinning: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Kernel document to verify; when absent the network kernel is built.
    pub kernel: Option<PathBuf>,
    /// Target set `V` of X-states; the empty-red states of a built kernel
    /// when absent.
    pub v: Option<Vec<usize>>,
    pub r_cap: u64,
    pub g_cap: u64,
    pub max_joint_states: u64,
    pub increment_cap: f64,
    /// Weight of the first-passage term; defaults to `2 M U + 0.1`.
    pub h: Option<f64>,
    pub top_fraction: f64,
    pub t_grid: Vec<usize>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            kernel: None,
            v: None,
            r_cap: 30,
            g_cap: 200,
            max_joint_states: 5_000_000,
            increment_cap: 10.0,
            h: None,
            top_fraction: mmstab::analysis::drift::DEFAULT_TOP_FRACTION,
            t_grid: mmstab::analysis::certificate::DEFAULT_T_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    /// Row-stochastic X-kernel; ignored when `kernel` is set.
    pub matrix: Vec<Vec<f64>>,
    /// Kernel document whose X-kernel is split.
    pub kernel: Option<PathBuf>,
    pub v: Vec<usize>,
    pub m: usize,
    pub t_max: u64,
    pub reps: usize,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            matrix: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            kernel: None,
            v: vec![0, 1],
            m: 1,
            t_max: 100,
            reps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdleSection {
    pub slots: u64,
    pub warmup: u64,
    /// Increment laws `P(chi = k)` for the synthetic single-queue chain.
    pub synthetic: Vec<Vec<f64>>,
}

impl Default for IdleSection {
    fn default() -> Self {
        Self {
            slots: 1_000_000,
            warmup: 100_000,
            synthetic: vec![vec![0.5, 0.5], vec![0.65, 0.0, 0.35], vec![1.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySection {
    pub slots: u64,
    pub reps: usize,
    pub warmup: Option<u64>,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self {
            slots: 1_000_000,
            reps: 6,
            warmup: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambda_g: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lambda_g: (1..=10).map(|k| k as f64 / 20.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundarySection {
    /// Defaults to `(0.4, 1.6)` times the theoretical threshold.
    pub bracket: Option<(f64, f64)>,
    pub tol: f64,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self {
            bracket: None,
            tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub tables: Vec<PathBuf>,
}

/// Flag values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub mode: Option<Mode>,
    pub m: Option<usize>,
    pub p: Option<f64>,
    pub lambda_r: Option<f64>,
    pub lambda_g: Option<f64>,
    pub slots: Option<u64>,
    pub reps: Option<usize>,
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// `--slots` and `--reps` apply to whichever section the subcommand uses.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = o.mode {
            self.network.mode = v;
        }
        if let Some(v) = o.m {
            self.network.m = v;
        }
        if let Some(v) = o.p {
            self.network.p = v;
        }
        if let Some(v) = o.lambda_r {
            self.network.lambda_r = v;
        }
        if let Some(v) = o.lambda_g {
            self.network.lambda_g = v;
        }
        if let Some(v) = o.slots {
            self.simulate.slots = v;
            self.idle.slots = v;
            self.classify.slots = v;
        }
        if let Some(v) = o.reps {
            self.coupling.reps = v;
            self.classify.reps = v;
        }
        if let Some(v) = o.tol {
            self.boundary.tol = v;
        }
    }

    /// Flag, then file, then `MMSTAB_OUT`, then `./mmstab-out`.
    pub fn resolve_out(&mut self) -> PathBuf {
        let dir = self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        self.out = Some(dir.clone());
        dir
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.verify.h = Some(1.5);
        c.boundary.bracket = Some((0.1, 0.2));
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flags_win_over_file() {
        let mut c: RunConfig = toml::from_str("seed = 4\n[network]\nM = 2\np = 0.5\n").unwrap();
        c.apply(&Overrides {
            p: Some(0.2),
            slots: Some(50),
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.network.m, c.network.p), (4, 2, 0.2));
        assert_eq!(c.classify.slots, 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 4\n").is_err());
        assert!(toml::from_str::<RunConfig>("[network]\nm = 2\n").is_err());
    }
}
