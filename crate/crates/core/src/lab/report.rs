//! Sweeps over `lambda_G` and the table/report outputs.
//!
//! Table columns: `mode, M, p, lambda_R, lambda_G, slots, seed, slope,
//! slope_ci_lo, slope_ci_hi, return_freq, verdict, threshold_theoretical`.
//! `threshold_theoretical` is empty when the red-rate precondition fails.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fsutil::write_atomic;
use crate::net::{theoretical_threshold, Mode, NetworkConfig};

use super::classify::{classify_stability, ClassifyOptions, Label};
use super::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: Mode,
    #[serde(rename = "M")]
    pub m: usize,
    pub p: f64,
    #[serde(rename = "lambda_R")]
    pub lambda_r: f64,
    #[serde(rename = "lambda_G")]
    pub lambda_g: f64,
    pub slots: u64,
    pub seed: u64,
    pub slope: f64,
    pub slope_ci_lo: f64,
    pub slope_ci_hi: f64,
    pub return_freq: f64,
    pub verdict: Label,
    pub threshold_theoretical: Option<f64>,
}

fn row_order(a: &SweepRow, b: &SweepRow) -> Ordering {
    (a.mode as u8)
        .cmp(&(b.mode as u8))
        .then(a.m.cmp(&b.m))
        .then(a.p.total_cmp(&b.p))
        .then(a.lambda_r.total_cmp(&b.lambda_r))
        .then(a.lambda_g.total_cmp(&b.lambda_g))
        .then(a.seed.cmp(&b.seed))
        .then(a.slots.cmp(&b.slots))
}

pub fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(row_order);
}

/// Classifies every `lambda_G` in parallel with one shared seed.
pub fn sweep(template: &NetworkConfig, lambdas: &[f64], opts: &ClassifyOptions) -> Result<Vec<SweepRow>, LabError> {
    let threshold = theoretical_threshold(template).value();
    let mut rows: Vec<SweepRow> = lambdas
        .par_iter()
        .map(|&lg| {
            let cfg = template.with_lambda_g(lg);
            let v = classify_stability(&cfg, opts)?;
            Ok(SweepRow {
                mode: cfg.mode,
                m: cfg.m,
                p: cfg.p,
                lambda_r: cfg.lambda_r,
                lambda_g: lg,
                slots: opts.slots,
                seed: opts.seed,
                slope: v.slope,
                slope_ci_lo: v.slope_ci.0,
                slope_ci_hi: v.slope_ci.1,
                return_freq: v.return_freq,
                verdict: v.label,
                threshold_theoretical: threshold,
            })
        })
        .collect::<Result<_, LabError>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// Adjacent points of one sweep (sorted rows sharing everything but
/// `lambda_G`) whose slope intervals are strictly decreasing.
pub fn monotonicity_violations(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    rows.windows(2)
        .filter(|w| {
            let same = w[0].mode == w[1].mode
                && w[0].m == w[1].m
                && w[0].p == w[1].p
                && w[0].lambda_r == w[1].lambda_r
                && w[0].seed == w[1].seed
                && w[0].slots == w[1].slots;
            same && w[1].slope_ci_hi < w[0].slope_ci_lo
        })
        .map(|w| (w[0].lambda_g, w[1].lambda_g))
        .collect()
}

pub fn table_to_csv(rows: &[SweepRow]) -> Result<Vec<u8>, LabError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        "mode",
        "M",
        "p",
        "lambda_R",
        "lambda_G",
        "slots",
        "seed",
        "slope",
        "slope_ci_lo",
        "slope_ci_hi",
        "return_freq",
        "verdict",
        "threshold_theoretical",
    ])
    .map_err(|e| LabError::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| LabError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| LabError::Io(e.to_string()))
}

pub fn read_table(path: &Path) -> Result<Vec<SweepRow>, LabError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| LabError::Io(format!("{}: {e}", path.display()))))
        .collect()
}

/// Merges tables, dropping exact duplicates, in table order.
pub fn merge_tables(paths: &[PathBuf]) -> Result<Vec<SweepRow>, LabError> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_table(p)?);
    }
    sort_rows(&mut rows);
    rows.dedup();
    Ok(rows)
}

/// SHA-256 of the JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let text = serde_json::to_string(config).expect("configs serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub library_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub rows: usize,
    pub monotonicity_violations: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub table: PathBuf,
    pub report: PathBuf,
}

pub const TABLE_FILE: &str = "table.csv";
pub const REPORT_FILE: &str = "report.json";

/// Writes `table.csv` and `report.json` under `dir`.
///
/// Rows are sorted and no timestamps are written, so equal inputs give
/// byte-identical files.
pub fn emit_report<T: Serialize>(
    rows: &[SweepRow],
    config: &T,
    notes: &[String],
    dir: &Path,
) -> Result<ReportPaths, LabError> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut notes = notes.to_vec();
    if rows
        .iter()
        .any(|r| r.mode == Mode::NoCoordinator && r.verdict == Label::Unstable)
    {
        notes.push(
            "UNSTABLE verdicts without a coordinator are empirical; no converse theorem backs them"
                .into(),
        );
    }
    let doc = ReportDocument {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(config),
        config: serde_json::to_value(config).map_err(|e| LabError::Io(e.to_string()))?,
        seeds,
        rows: rows.len(),
        monotonicity_violations: monotonicity_violations(&rows),
        notes,
    };
    let table = dir.join(TABLE_FILE);
    let report = dir.join(REPORT_FILE);
    let io = |p: &Path, e: std::io::Error| LabError::Io(format!("{}: {e}", p.display()));
    write_atomic(&table, &table_to_csv(&rows)?).map_err(|e| io(&table, e))?;
    let mut json = serde_json::to_vec_pretty(&doc).map_err(|e| LabError::Io(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&report, &json).map_err(|e| io(&report, e))?;
    Ok(ReportPaths { table, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(lg: f64, lo: f64, hi: f64) -> SweepRow {
        SweepRow {
            mode: Mode::Coordinator,
            m: 1,
            p: 0.3,
            lambda_r: 0.5,
            lambda_g: lg,
            slots: 10,
            seed: 1,
            slope: 0.5 * (lo + hi),
            slope_ci_lo: lo,
            slope_ci_hi: hi,
            return_freq: 0.5,
            verdict: Label::Stable,
            threshold_theoretical: Some(0.15),
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let bytes = table_to_csv(&[]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("mode,M,p,lambda_R,lambda_G,slots,seed,slope"));
    }

    #[test]
    fn rows_sorted_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<SweepRow> = [0.3, 0.1, 0.2, 0.05, 0.25]
            .iter()
            .map(|&l| row(l, -0.1, 0.1))
            .collect();
        let paths = emit_report(&rows, &"cfg", &[], dir.path()).unwrap();
        let back = read_table(&paths.table).unwrap();
        let lg: Vec<f64> = back.iter().map(|r| r.lambda_g).collect();
        assert_eq!(lg, vec![0.05, 0.1, 0.2, 0.25, 0.3]);
        let first = std::fs::read(&paths.table).unwrap();
        emit_report(&rows, &"cfg", &[], dir.path()).unwrap();
        assert_eq!(std::fs::read(&paths.table).unwrap(), first);
    }

    #[test]
    fn infeasible_threshold_is_empty_cell() {
        let mut r = row(0.1, 0.0, 0.0);
        r.threshold_theoretical = None;
        let text = String::from_utf8(table_to_csv(&[r]).unwrap()).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with("STABLE,"));
    }

    #[test]
    fn decreasing_slopes_are_flagged() {
        let rows = vec![row(0.1, 0.2, 0.3), row(0.2, 0.0, 0.1)];
        assert_eq!(monotonicity_violations(&rows), vec![(0.1, 0.2)]);
        let ok = vec![row(0.1, 0.0, 0.3), row(0.2, 0.1, 0.2)];
        assert!(monotonicity_violations(&ok).is_empty());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(&"a"), config_hash(&"a"));
        assert_ne!(config_hash(&"a"), config_hash(&"b"));
        assert_eq!(config_hash(&"a").len(), 64);
    }
}
