//! Dense kernels and the incremental orthogonal-projection engine.
//!
//! The projector onto the orthogonal complement of the selected columns is
//! never formed explicitly. [`ProjectionState`] keeps an orthonormal basis of
//! the selected span (modified Gram-Schmidt with one reorthogonalization
//! pass) together with the projected residual `P y`.

use thiserror::Error;

/// Relative norm below which an appended column is treated as lying in the
/// span of the current basis.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Relative norm used when a caller needs full column rank.
pub const RANK_TOL: f64 = 1e-10;

/// `‖P y‖² ≤ ZERO_RESIDUAL_REL · ‖y‖²` counts as an exhausted residual.
pub const ZERO_RESIDUAL_REL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("column is numerically in the span of the current basis")]
    DegenerateColumn,
    #[error("residual is numerically zero")]
    ZeroResidual,
    #[error("matrix is rank deficient (rank < {expected})")]
    RankDeficient { expected: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(LinalgError::DimensionMismatch {
                    expected: rows,
                    got: c.len(),
                });
            }
            for (i, v) in c.iter().enumerate() {
                m.data[i * cols + j] = *v;
            }
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Submatrix made of the listed columns, in order.
    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            let src = self.row(i);
            for (c, &j) in idx.iter().enumerate() {
                out.data[i * idx.len() + c] = src[j];
            }
        }
        out
    }

    /// `A v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `A' u`, traversing rows so the access pattern stays contiguous.
    pub fn tr_mul_vec(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.rows, "tr_mul_vec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                axpy(ui, self.row(i), &mut out);
            }
        }
        out
    }

    /// Squared Euclidean norm of every column.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v * v;
            }
        }
        out
    }
}

/// Orthonormal basis of the selected columns plus the projected residual.
#[derive(Debug, Clone)]
pub struct ProjectionState {
    selected: Vec<usize>,
    basis: Vec<Vec<f64>>,
    /// Column `t` holds the Gram-Schmidt coefficients of the `t`-th appended
    /// column against `basis[0..=t]`.
    r_factor: Vec<Vec<f64>>,
    /// Coordinates of `y` along each basis vector.
    qty: Vec<f64>,
    residual: Vec<f64>,
    y_norm_sq: f64,
}

impl ProjectionState {
    pub fn new(y: &[f64]) -> Self {
        Self {
            selected: Vec::new(),
            basis: Vec::new(),
            r_factor: Vec::new(),
            qty: Vec::new(),
            residual: y.to_vec(),
            y_norm_sq: norm_sq(y),
        }
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn residual_norm_sq(&self) -> f64 {
        norm_sq(&self.residual)
    }

    pub fn is_exhausted(&self) -> bool {
        self.residual_norm_sq() <= ZERO_RESIDUAL_REL * self.y_norm_sq
    }

    /// Appends `column` (tagged with `index`) using the default degeneracy
    /// tolerance.
    pub fn append(&mut self, index: usize, column: &[f64]) -> Result<(), LinalgError> {
        self.append_with_tol(index, column, DEGENERATE_TOL)
    }

    /// On error the state is left untouched.
    pub fn append_with_tol(&mut self, index: usize, column: &[f64], rel_tol: f64) -> Result<(), LinalgError> {
        if column.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                got: column.len(),
            });
        }
        let original = norm_sq(column).sqrt();
        let mut v = column.to_vec();
        let mut coeffs = vec![0.0; self.basis.len() + 1];
        for _pass in 0..2 {
            for (q, c) in self.basis.iter().zip(coeffs.iter_mut()) {
                let h = dot(q, &v);
                axpy(-h, q, &mut v);
                *c += h;
            }
        }
        let norm = norm_sq(&v).sqrt();
        if !(norm > rel_tol * original) || original == 0.0 {
            return Err(LinalgError::DegenerateColumn);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        *coeffs.last_mut().unwrap() = norm;

        let h = dot(&v, &self.residual);
        axpy(-h, &v, &mut self.residual);
        self.qty.push(h);
        self.basis.push(v);
        self.r_factor.push(coeffs);
        self.selected.push(index);
        Ok(())
    }

    /// Least-squares coefficients of `y` on the selected columns, in the
    /// order they were appended.
    pub fn coefficients(&self) -> Vec<f64> {
        let k = self.basis.len();
        let mut c = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = self.qty[i];
            for (j, cj) in c.iter().enumerate().skip(i + 1) {
                s -= self.r_factor[j][i] * cj;
            }
            c[i] = s / self.r_factor[i][i];
        }
        c
    }
}

/// `(column · residual)² / ‖residual‖²`.
pub fn selection_ratio(state: &ProjectionState, column: &[f64]) -> Result<f64, LinalgError> {
    if column.len() != state.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: state.dim(),
            got: column.len(),
        });
    }
    if state.is_exhausted() {
        return Err(LinalgError::ZeroResidual);
    }
    let c = dot(column, state.residual());
    Ok(c * c / state.residual_norm_sq())
}

/// Selection ratios of every column of `a` against the current residual.
pub fn selection_ratios(a: &DenseMatrix, state: &ProjectionState) -> Result<Vec<f64>, LinalgError> {
    if a.rows() != state.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: state.dim(),
            got: a.rows(),
        });
    }
    if state.is_exhausted() {
        return Err(LinalgError::ZeroResidual);
    }
    let denom = state.residual_norm_sq();
    let mut c = a.tr_mul_vec(state.residual());
    c.iter_mut().for_each(|v| *v = *v * *v / denom);
    Ok(c)
}

fn factor_columns(phi: &DenseMatrix, y: &[f64]) -> Result<ProjectionState, LinalgError> {
    if y.len() != phi.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: phi.rows(),
            got: y.len(),
        });
    }
    let mut state = ProjectionState::new(y);
    for j in 0..phi.cols() {
        state
            .append_with_tol(j, &phi.column(j), RANK_TOL)
            .map_err(|_| LinalgError::RankDeficient { expected: phi.cols() })?;
    }
    Ok(state)
}

/// Minimizes `‖y − Φ v‖²`; requires full column rank.
pub fn least_squares(phi: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>, LinalgError> {
    Ok(factor_columns(phi, y)?.coefficients())
}

/// Splits `w = Φ v + w_perp` with `Φ' w_perp = 0`.
pub fn decompose_noise(phi: &DenseMatrix, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let state = factor_columns(phi, w)?;
    Ok((state.coefficients(), state.residual().to_vec()))
}

/// Extreme singular values by one-sided Jacobi rotations on the columns.
pub fn singular_value_extremes(phi: &DenseMatrix) -> (f64, f64) {
    let (m, k) = (phi.rows(), phi.cols());
    if k == 0 {
        return (0.0, 0.0);
    }
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| phi.column(j)).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = norm_sq(&cols[p]);
                let beta = norm_sq(&cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for i in 0..m {
                    let a = cp[i];
                    let b = cq[i];
                    cp[i] = c * a - s * b;
                    cq[i] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv: Vec<f64> = cols.iter().map(|c| norm_sq(c).sqrt()).collect();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    (smin, smax)
}
