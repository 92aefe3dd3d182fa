//! Small dense matrices for the per-step kernels.
//!
//! State dimensions are tiny, so the hot loops work on row-major `Vec<f64>`
//! storage with allocation-free mat-vec helpers. nalgebra is used only for
//! one-off setup (exponentials, eigenvalues, inverses, singular values).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("matrix", "dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::param(
                "matrix",
                format!("expected {} entries for {rows}x{cols}, got {}", rows * cols, data.len()),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("matrix", "entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::param("matrix", "ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    /// `c * I_n`.
    pub fn scalar(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = c;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `out = self * x`.
    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += self * x`.
    #[inline]
    pub fn mul_vec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * c).collect() }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        Matrix::from_dmatrix(&(self.to_dmatrix() * other.to_dmatrix()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    /// Matrix exponential.
    pub fn expm(&self) -> Matrix {
        assert!(self.is_square(), "exponential of a non-square matrix");
        Matrix::from_dmatrix(&self.to_dmatrix().exp())
    }

    /// Largest singular value (spectral norm).
    pub fn operator_norm(&self) -> f64 {
        if self.rows == 1 && self.cols == 1 {
            return self.data[0].abs();
        }
        self.to_dmatrix().singular_values().max()
    }

    pub fn inverse(&self) -> Option<Matrix> {
        self.to_dmatrix().try_inverse().map(|m| Matrix::from_dmatrix(&m))
    }

    /// Largest eigenvalue of the symmetric part `(M + M^T)/2`.
    pub fn symmetric_part_max_eigenvalue(&self) -> f64 {
        let d = self.to_dmatrix();
        let sym = (&d + d.transpose()) * 0.5;
        sym.symmetric_eigen().eigenvalues.max()
    }

    /// `Some(c)` when the matrix equals `c * I`.
    pub fn as_scalar_identity(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let c = self.data[0];
        let n = self.rows;
        let ok = (0..n).all(|i| (0..n).all(|j| self.get(i, j) == if i == j { c } else { 0.0 }));
        ok.then_some(c)
    }
}

/// `(e^M, φ1(M), φ2(M))` with `φ1(M) = ∫₀¹ e^{M(1-s)} ds` and
/// `φ2(M) = ∫₀¹ e^{M(1-s)} s ds`, read off one augmented exponential.
pub fn exp_phi(m: &Matrix) -> (Matrix, Matrix, Matrix) {
    assert!(m.is_square());
    let n = m.rows();
    let mut aug = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = m.get(i, j);
        }
        aug[(i, n + i)] = 1.0;
        aug[(n + i, 2 * n + i)] = 1.0;
    }
    let e = aug.exp();
    let block = |c0: usize| Matrix::from_dmatrix(&e.view((0, c0), (n, n)).into_owned());
    (block(0), block(n), block(2 * n))
}

/// Euclidean norm.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean distance.
#[inline]
pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_match_scalar_closed_forms() {
        for &x in &[-3.0, -0.2, 0.7] {
            let (e, p1, p2) = exp_phi(&Matrix::scalar(1, x));
            let ex: f64 = f64::exp(x);
            assert!((e.get(0, 0) - ex).abs() < 1e-12);
            assert!((p1.get(0, 0) - (ex - 1.0) / x).abs() < 1e-9);
            assert!((p2.get(0, 0) - (ex - 1.0 - x) / (x * x)).abs() < 1e-6);
        }
        // Near zero the closed forms cancel; compare with the series.
        let (_, p1, p2) = exp_phi(&Matrix::scalar(1, 1e-6));
        assert!((p1.get(0, 0) - (1.0 + 0.5e-6)).abs() < 1e-12);
        assert!((p2.get(0, 0) - (0.5 + 1e-6 / 6.0)).abs() < 1e-12);
        let (_, p1, p2) = exp_phi(&Matrix::zeros(2, 2));
        assert_eq!(p1, Matrix::identity(2));
        assert!((p2.get(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mat_vec_and_norms() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.0, 7.0]);
        let mut acc = vec![1.0, 1.0];
        m.mul_vec_add(&[1.0, 0.0], &mut acc);
        assert_eq!(acc, vec![2.0, 4.0]);
        assert!((Matrix::scalar(3, -2.0).operator_norm() - 2.0).abs() < 1e-12);
        assert_eq!(Matrix::scalar(2, -2.0).as_scalar_identity(), Some(-2.0));
        assert_eq!(m.as_scalar_identity(), None);
        assert!((Matrix::scalar(2, -2.0).symmetric_part_max_eigenvalue() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
    }
}
