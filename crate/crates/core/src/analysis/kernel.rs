use super::sparse::CsrMatrix;
use super::AnalysisError;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Per-coordinate Lyapunov values `L2_i(y)` for a product-structured Y-space.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    m: usize,
    values: Vec<f64>,
}

impl CoordinateMap {
    /// `values` is row-major `n_y x m`: entry `y * m + i` is `L2_i(y)`.
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if m == 0 || values.len() % m != 0 {
            return Err(AnalysisError::Dimension(format!(
                "coordinate table of length {} is not a multiple of m = {m}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(AnalysisError::InvalidArgument(
                "coordinate Lyapunov values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { m, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_y(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn value(&self, y: usize, i: usize) -> f64 {
        self.values[y * self.m + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n_y()).map(|y| self.value(y, i)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mass that a truncated kernel folded back onto its boundary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Leakage {
    /// Per X-state.
    pub x: Vec<f64>,
    /// Per Y-kernel (indexed like [`ModulatedKernel::y_kernels`]), per Y-state.
    pub y: Vec<Vec<f64>>,
}

/// Finite Markov-modulated kernel.
///
/// From `(x, y)` the next state is `(x', y')` with probability
/// `P_X(x, x') * K(x)(y, y')`: the X-chain moves autonomously and the Y-step
/// is driven by the current X-state. Y-kernels may be shared between
/// X-states; `y_kernel_of[x]` names the matrix used at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedKernel {
    px: CsrMatrix,
    y_kernels: Vec<CsrMatrix>,
    y_kernel_of: Vec<usize>,
    l2: Vec<f64>,
    coords: Option<CoordinateMap>,
    leakage: Option<Leakage>,
}

fn check_stochastic(name: &str, m: &CsrMatrix) -> Result<(), AnalysisError> {
    if m.n_rows() != m.n_cols() {
        return Err(AnalysisError::Dimension(format!(
            "{name} is {}x{}, expected square",
            m.n_rows(),
            m.n_cols()
        )));
    }
    if !m.is_nonnegative() {
        return Err(AnalysisError::NotStochastic(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let defect = m.max_stochastic_defect();
    if defect > STOCHASTIC_TOL {
        return Err(AnalysisError::NotStochastic(format!(
            "{name} has a row sum off by {defect:e}"
        )));
    }
    Ok(())
}

impl ModulatedKernel {
    /// One Y-kernel per X-state; `L2` defaults to the Y-state index.
    pub fn new(px: CsrMatrix, y_kernels: Vec<CsrMatrix>) -> Result<Self, AnalysisError> {
        let index = (0..y_kernels.len()).collect();
        Self::with_shared(px, y_kernels, index)
    }

    pub fn with_shared(
        px: CsrMatrix,
        y_kernels: Vec<CsrMatrix>,
        y_kernel_of: Vec<usize>,
    ) -> Result<Self, AnalysisError> {
        check_stochastic("P_X", &px)?;
        if y_kernel_of.len() != px.n_rows() {
            return Err(AnalysisError::Dimension(format!(
                "{} Y-kernel assignments for {} X-states",
                y_kernel_of.len(),
                px.n_rows()
            )));
        }
        let n_y = y_kernels.first().map(CsrMatrix::n_rows).ok_or_else(|| {
            AnalysisError::Dimension("at least one Y-kernel is required".into())
        })?;
        for (k, m) in y_kernels.iter().enumerate() {
            check_stochastic(&format!("K[{k}]"), m)?;
            if m.n_rows() != n_y {
                return Err(AnalysisError::Dimension(format!(
                    "K[{k}] has {} rows, expected {n_y}",
                    m.n_rows()
                )));
            }
        }
        if let Some(&bad) = y_kernel_of.iter().find(|&&k| k >= y_kernels.len()) {
            return Err(AnalysisError::Dimension(format!(
                "Y-kernel index {bad} out of range"
            )));
        }
        Ok(Self {
            px,
            y_kernels,
            y_kernel_of,
            l2: (0..n_y).map(|y| y as f64).collect(),
            coords: None,
            leakage: None,
        })
    }

    pub fn with_l2(mut self, l2: Vec<f64>) -> Result<Self, AnalysisError> {
        if l2.len() != self.n_y() {
            return Err(AnalysisError::Dimension(format!(
                "L2 has {} entries for {} Y-states",
                l2.len(),
                self.n_y()
            )));
        }
        if l2.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(AnalysisError::InvalidArgument(
                "L2 values must be finite and non-negative".into(),
            ));
        }
        self.l2 = l2;
        Ok(self)
    }

    pub fn with_coords(mut self, coords: CoordinateMap) -> Result<Self, AnalysisError> {
        if coords.n_y() != self.n_y() {
            return Err(AnalysisError::Dimension(format!(
                "coordinate map covers {} Y-states, kernel has {}",
                coords.n_y(),
                self.n_y()
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_leakage(mut self, leakage: Leakage) -> Result<Self, AnalysisError> {
        if leakage.x.len() != self.n_x()
            || leakage.y.len() != self.y_kernels.len()
            || leakage.y.iter().any(|v| v.len() != self.n_y())
        {
            return Err(AnalysisError::Dimension("leakage table shape mismatch".into()));
        }
        self.leakage = Some(leakage);
        Ok(self)
    }

    pub fn n_x(&self) -> usize {
        self.px.n_rows()
    }

    pub fn n_y(&self) -> usize {
        self.y_kernels[0].n_rows()
    }

    pub fn px(&self) -> &CsrMatrix {
        &self.px
    }

    pub fn y_kernel(&self, x: usize) -> &CsrMatrix {
        &self.y_kernels[self.y_kernel_of[x]]
    }

    pub fn y_kernels(&self) -> &[CsrMatrix] {
        &self.y_kernels
    }

    pub fn y_kernel_of(&self) -> &[usize] {
        &self.y_kernel_of
    }

    pub fn l2(&self) -> &[f64] {
        &self.l2
    }

    pub fn coords(&self) -> Option<&CoordinateMap> {
        self.coords.as_ref()
    }

    pub fn leakage(&self) -> Option<&Leakage> {
        self.leakage.as_ref()
    }

    /// Number of Lyapunov coordinates (1 unless a coordinate map is set).
    pub fn n_coords(&self) -> usize {
        self.coords.as_ref().map_or(1, CoordinateMap::m)
    }

    /// Lyapunov values of coordinate `i` over the Y-states. Without a
    /// coordinate map there is a single coordinate, `L2` itself.
    pub fn coordinate_values(&self, i: usize) -> Vec<f64> {
        match &self.coords {
            Some(c) => c.column(i),
            None => self.l2.clone(),
        }
    }

    /// Sum of coordinate Lyapunov values per Y-state (equals `L2` in
    /// one-dimensional mode).
    pub fn total_l2(&self) -> Vec<f64> {
        match &self.coords {
            Some(c) => (0..self.n_y())
                .map(|y| (0..c.m()).map(|i| c.value(y, i)).sum())
                .collect(),
            None => self.l2.clone(),
        }
    }

    #[inline]
    pub fn joint_index(&self, x: usize, y: usize) -> usize {
        x * self.n_y() + y
    }

    /// Applies the joint transition operator to a function on `(x, y)`
    /// (stored row-major with Y fastest): returns `E_{x,y} v(X^1, Y^1)`.
    pub fn apply_joint(&self, v: &[f64]) -> Vec<f64> {
        let n_y = self.n_y();
        debug_assert_eq!(v.len(), self.n_x() * n_y);
        let mut out = vec![0.0; v.len()];
        let mut mixed = vec![0.0; n_y];
        for x in 0..self.n_x() {
            mixed.iter_mut().for_each(|m| *m = 0.0);
            for (x2, a) in self.px.row(x) {
                let src = &v[x2 * n_y..(x2 + 1) * n_y];
                for (m, s) in mixed.iter_mut().zip(src) {
                    *m += a * s;
                }
            }
            let k = self.y_kernel(x);
            let dst = &mut out[x * n_y..(x + 1) * n_y];
            for (y, d) in dst.iter_mut().enumerate() {
                *d = k.row(y).map(|(y2, b)| b * mixed[y2]).sum();
            }
        }
        out
    }

    /// Pushes a joint distribution one step forward.
    pub fn push_joint(&self, dist: &[f64]) -> Vec<f64> {
        let n_y = self.n_y();
        let mut out = vec![0.0; dist.len()];
        for x in 0..self.n_x() {
            let src = &dist[x * n_y..(x + 1) * n_y];
            if src.iter().all(|&w| w == 0.0) {
                continue;
            }
            let moved = self.y_kernel(x).vec_mul(src);
            for (x2, a) in self.px.row(x) {
                let dst = &mut out[x2 * n_y..(x2 + 1) * n_y];
                for (d, m) in dst.iter_mut().zip(&moved) {
                    *d += a * m;
                }
            }
        }
        out
    }
}

/// Non-empty subset of X-states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSet {
    members: Vec<usize>,
    mask: Vec<bool>,
}

impl StateSet {
    pub fn new(n: usize, members: impl IntoIterator<Item = usize>) -> Result<Self, AnalysisError> {
        let mut mask = vec![false; n];
        for x in members {
            if x >= n {
                return Err(AnalysisError::InvalidArgument(format!(
                    "state {x} outside 0..{n}"
                )));
            }
            mask[x] = true;
        }
        let members: Vec<usize> = (0..n).filter(|&x| mask[x]).collect();
        if members.is_empty() {
            return Err(AnalysisError::EmptySet);
        }
        Ok(Self { members, mask })
    }

    pub fn full(n: usize) -> Result<Self, AnalysisError> {
        Self::new(n, 0..n)
    }

    pub fn contains(&self, x: usize) -> bool {
        self.mask.get(x).copied().unwrap_or(false)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == self.mask.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> ModulatedKernel {
        let px = CsrMatrix::from_dense(2, 2, &[0.8, 0.2, 0.3, 0.7]);
        let k0 = CsrMatrix::from_dense(2, 2, &[0.5, 0.5, 0.0, 1.0]);
        let k1 = CsrMatrix::from_dense(2, 2, &[1.0, 0.0, 0.4, 0.6]);
        ModulatedKernel::new(px, vec![k0, k1]).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let px = CsrMatrix::from_dense(1, 1, &[0.9]);
        let k = CsrMatrix::identity(2);
        assert!(matches!(
            ModulatedKernel::new(px, vec![k]),
            Err(AnalysisError::NotStochastic(_))
        ));
    }

    #[test]
    fn rejects_negative_l2() {
        let k = two_by_two();
        assert!(k.with_l2(vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn joint_operator_is_adjoint_of_push() {
        let k = two_by_two();
        let f = [1.0, 2.0, 3.0, 5.0];
        let mu = [0.1, 0.2, 0.3, 0.4];
        let lhs: f64 = k.push_joint(&mu).iter().zip(&f).map(|(a, b)| a * b).sum();
        let rhs: f64 = k.apply_joint(&f).iter().zip(&mu).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
        let pushed = k.push_joint(&mu);
        assert!((pushed.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_set_rejected() {
        assert_eq!(StateSet::new(3, []), Err(AnalysisError::EmptySet));
        assert!(StateSet::full(3).unwrap().is_full());
    }
}
