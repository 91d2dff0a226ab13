//! JSON kernel documents.
//!
//! ```json
//! {
//!   "n_x": 2,
//!   "n_y": 3,
//!   "p_x": { "rows": 2, "cols": 2, "data": [0.8, 0.2, 0.3, 0.7] },
//!   "y_kernels": [ { "rows": 3, "cols": 3, "entries": [[0, 1, 1.0], ...] } ],
//!   "y_kernel_of": [0, 0],
//!   "l2": [0.0, 1.0, 2.0],
//!   "coords": { "m": 1, "values": [0.0, 1.0, 2.0] },
//!   "leakage": { "x": [0.0, 0.0], "y": [[0.0, 0.0, 0.0]] }
//! }
//! ```
//!
//! A matrix is either dense (`data`, row-major) or sparse (`entries`, a list
//! of `[row, col, value]`). `coords` and `leakage` are optional. Numbers are
//! written with shortest round-trip formatting, so values survive a
//! write/read cycle bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;

use super::kernel::{CoordinateMap, Leakage, ModulatedKernel};
use super::sparse::CsrMatrix;
use super::AnalysisError;

/// Matrices up to this many cells are written densely.
pub const DENSE_LIMIT: usize = 250_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<(usize, usize, f64)>>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &CsrMatrix) -> Self {
        let dense = m.n_rows() * m.n_cols() <= DENSE_LIMIT;
        Self {
            rows: m.n_rows(),
            cols: m.n_cols(),
            data: dense.then(|| m.to_row_major()),
            entries: (!dense).then(|| m.triplets()),
        }
    }

    pub fn to_matrix(&self) -> Result<CsrMatrix, AnalysisError> {
        match (&self.data, &self.entries) {
            (Some(data), None) => {
                if data.len() != self.rows * self.cols {
                    return Err(AnalysisError::Format(format!(
                        "dense matrix has {} values, expected {}",
                        data.len(),
                        self.rows * self.cols
                    )));
                }
                Ok(CsrMatrix::from_dense(self.rows, self.cols, data))
            }
            (None, Some(entries)) => {
                let mut rows = vec![Vec::new(); self.rows];
                for &(i, j, v) in entries {
                    if i >= self.rows || j >= self.cols {
                        return Err(AnalysisError::Format(format!(
                            "entry ({i}, {j}) outside a {}x{} matrix",
                            self.rows, self.cols
                        )));
                    }
                    rows[i].push((j, v));
                }
                Ok(CsrMatrix::from_rows(self.cols, rows))
            }
            _ => Err(AnalysisError::Format(
                "matrix needs exactly one of `data` or `entries`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordsDoc {
    pub m: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageDoc {
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDoc {
    pub n_x: usize,
    pub n_y: usize,
    pub p_x: MatrixDoc,
    pub y_kernels: Vec<MatrixDoc>,
    pub y_kernel_of: Vec<usize>,
    pub l2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<CoordsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage: Option<LeakageDoc>,
}

impl KernelDoc {
    pub fn from_kernel(k: &ModulatedKernel) -> Self {
        Self {
            n_x: k.n_x(),
            n_y: k.n_y(),
            p_x: MatrixDoc::from_matrix(k.px()),
            y_kernels: k.y_kernels().iter().map(MatrixDoc::from_matrix).collect(),
            y_kernel_of: k.y_kernel_of().to_vec(),
            l2: k.l2().to_vec(),
            coords: k.coords().map(|c| CoordsDoc {
                m: c.m(),
                values: c.values().to_vec(),
            }),
            leakage: k.leakage().map(|l| LeakageDoc {
                x: l.x.clone(),
                y: l.y.clone(),
            }),
        }
    }

    pub fn to_kernel(&self) -> Result<ModulatedKernel, AnalysisError> {
        let px = self.p_x.to_matrix()?;
        if px.n_rows() != self.n_x {
            return Err(AnalysisError::Format(format!(
                "n_x = {} but p_x has {} rows",
                self.n_x,
                px.n_rows()
            )));
        }
        let ys = self
            .y_kernels
            .iter()
            .map(MatrixDoc::to_matrix)
            .collect::<Result<Vec<_>, _>>()?;
        if ys.iter().any(|m| m.n_rows() != self.n_y) {
            return Err(AnalysisError::Format(format!(
                "a Y-kernel does not have n_y = {} rows",
                self.n_y
            )));
        }
        let mut k = ModulatedKernel::with_shared(px, ys, self.y_kernel_of.clone())?
            .with_l2(self.l2.clone())?;
        if let Some(c) = &self.coords {
            k = k.with_coords(CoordinateMap::new(c.m, c.values.clone())?)?;
        }
        if let Some(l) = &self.leakage {
            k = k.with_leakage(Leakage {
                x: l.x.clone(),
                y: l.y.clone(),
            })?;
        }
        Ok(k)
    }
}

pub fn kernel_to_json(k: &ModulatedKernel) -> String {
    serde_json::to_string(&KernelDoc::from_kernel(k)).expect("kernel documents always serialize")
}

pub fn kernel_from_json(text: &str) -> Result<ModulatedKernel, AnalysisError> {
    let doc: KernelDoc =
        serde_json::from_str(text).map_err(|e| AnalysisError::Format(e.to_string()))?;
    doc.to_kernel()
}

/// Writes atomically through a temporary sibling.
pub fn write_kernel(path: &Path, k: &ModulatedKernel) -> Result<(), AnalysisError> {
    write_atomic(path, kernel_to_json(k).as_bytes())
        .map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))
}

pub fn read_kernel(path: &Path) -> Result<ModulatedKernel, AnalysisError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
    kernel_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ModulatedKernel {
        let px = CsrMatrix::from_dense(2, 2, &[0.8, 0.2, 0.3, 0.7]);
        let k0 = CsrMatrix::from_dense(3, 3, &[0.9, 0.1, 0.0, 0.4, 0.5, 0.1, 0.0, 0.3, 0.7]);
        ModulatedKernel::with_shared(px, vec![k0], vec![0, 0])
            .unwrap()
            .with_coords(CoordinateMap::new(1, vec![0.0, 1.0, 2.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn round_trip() {
        let k = sample();
        assert_eq!(kernel_from_json(&kernel_to_json(&k)).unwrap(), k);
    }

    #[test]
    fn sparse_form_is_accepted() {
        let mut doc = KernelDoc::from_kernel(&sample());
        doc.p_x = MatrixDoc {
            rows: 2,
            cols: 2,
            data: None,
            entries: Some(vec![(0, 0, 0.8), (0, 1, 0.2), (1, 0, 0.3), (1, 1, 0.7)]),
        };
        assert_eq!(doc.to_kernel().unwrap(), sample());
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(matches!(kernel_from_json("{"), Err(AnalysisError::Format(_))));
        let mut doc = KernelDoc::from_kernel(&sample());
        doc.p_x.data = Some(vec![0.5, 0.5, 0.5]);
        assert!(doc.to_kernel().is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        write_kernel(&path, &sample()).unwrap();
        assert_eq!(read_kernel(&path).unwrap(), sample());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    fn decimal() -> impl Strategy<Value = f64> {
        // at most 15 significant digits
        (1u64..999_999_999_999_999, -20i32..5).prop_map(|(m, e)| {
            format!("{m}e{e}").parse::<f64>().unwrap()
        })
    }

    proptest! {
        #[test]
        fn decimals_round_trip_exactly(
            raw in proptest::collection::vec(decimal(), 4),
            l2 in proptest::collection::vec(decimal(), 2),
        ) {
            let row = |a: f64, b: f64| vec![a / (a + b), 1.0 - a / (a + b)];
            let r0 = row(raw[0], raw[1]);
            let r1 = row(raw[2], raw[3]);
            let px = CsrMatrix::from_row_vecs(&[r0.clone(), r1.clone()]);
            let ky = CsrMatrix::from_row_vecs(&[r1, r0]);
            let k = ModulatedKernel::new(px, vec![ky.clone(), ky]).unwrap().with_l2(l2).unwrap();
            let back = kernel_from_json(&kernel_to_json(&k)).unwrap();
            prop_assert_eq!(back, k);
        }
    }
}
