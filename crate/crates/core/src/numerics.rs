//! Dense row-major `f64` matrices and the handful of operations the
//! filtration math needs: products, Gauss–Jordan inversion and means.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold used by [`Matrix::invert`].
pub const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major storage, rejecting bad lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("rows have unequal lengths"));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::shape("columns have unequal lengths"));
        }
        let m = Matrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Picks out the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Gauss–Jordan elimination with partial pivoting.
    ///
    /// Fails with [`Error::SingularMatrix`] once the best available pivot
    /// drops below [`PIVOT_TOLERANCE`] times the largest absolute entry of
    /// the input.
    pub fn invert(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::shape(format!(
                "cannot invert non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix to invert"));
        }
        let n = self.rows;
        let scale = self.max_abs();
        let threshold = PIVOT_TOLERANCE * scale;
        if n == 0 {
            return Ok(Matrix::zeros(0, 0));
        }
        if scale == 0.0 {
            return Err(Error::SingularMatrix {
                context: "zero matrix".into(),
            });
        }

        let mut work = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, work[(r, col)].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs < threshold {
                return Err(Error::SingularMatrix {
                    context: format!(
                        "pivot {pivot_abs:e} in column {col} below tolerance {threshold:e}"
                    ),
                });
            }
            if pivot_row != col {
                work.swap_rows(pivot_row, col);
                inv.swap_rows(pivot_row, col);
            }

            let pivot = work[(col, col)];
            for v in work.row_mut(col) {
                *v /= pivot;
            }
            for v in inv.row_mut(col) {
                *v /= pivot;
            }

            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = work[(r, col)];
                if factor == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let w = work[(col, c)];
                    work[(r, c)] -= factor * w;
                    let iv = inv[(col, c)];
                    inv[(r, c)] -= factor * iv;
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; `f64::INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Elementwise arithmetic mean of equal-length vectors.
pub fn column_mean<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput("column_mean"))?;
    let dim = first.as_ref().len();
    let mut sum = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::shape(format!(
                "vector of length {} among vectors of length {dim}",
                v.len()
            )));
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
    }

    fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut m = random_matrix(rng, n, n, -1.0, 1.0);
        for i in 0..n {
            m[(i, i)] += n as f64;
        }
        m
    }

    #[test]
    fn identity_inverts_to_identity() {
        let i3 = Matrix::identity(3);
        assert_eq!(i3.invert().unwrap(), i3);
    }

    #[test]
    fn diagonal_inverse() {
        let inv = Matrix::diag(&[2.0, 4.0]).invert().unwrap();
        assert_eq!(inv, Matrix::diag(&[0.5, 0.25]));
    }

    #[test]
    fn random_inverse_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = well_conditioned(&mut rng, 5);
        let inv = m.invert().unwrap();
        let prod = m.matmul(&inv).unwrap();
        assert!(prod.max_abs_diff(&Matrix::identity(5)) < 1e-8);
    }

    #[test]
    fn needs_pivoting() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.invert().unwrap(), m);
    }

    #[test]
    fn singular_detected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(m.invert(), Err(Error::SingularMatrix { .. })));
        let near = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-13]]).unwrap();
        assert!(matches!(near.invert(), Err(Error::SingularMatrix { .. })));
        assert!(matches!(
            Matrix::zeros(3, 3).invert(),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn invert_rejects_non_square() {
        assert!(matches!(
            Matrix::zeros(2, 3).invert(),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn matmul_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 3, 4, -5.0, 5.0);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);

        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(
            a.matmul(&b).unwrap(),
            Matrix::from_rows(&[vec![3.0], vec![7.0]]).unwrap()
        );
        assert!(matches!(a.matmul(&m), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn filtration_round_trip_through_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = well_conditioned(&mut rng, 6);
        let b = random_matrix(&mut rng, 5, 6, -3.0, 3.0);
        let f = b.matmul(&a.invert().unwrap()).unwrap();
        assert!(f.matmul(&a).unwrap().max_abs_diff(&b) < 1e-8);
    }

    #[test]
    fn column_mean_examples() {
        assert_eq!(column_mean(&[vec![1.0, 2.0, 3.0]]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(
            column_mean(&[vec![1.0, 2.0, 3.0], vec![3.0, 4.0, 5.0]]).unwrap(),
            vec![2.0, 3.0, 4.0]
        );
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(column_mean(&empty), Err(Error::EmptyInput(_))));
        assert!(column_mean(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn column_mean_of_gaussian_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = [0.3, -1.2, 4.0, 0.0];
        let noise = Normal::new(0.0, 0.1).unwrap();
        let draws: Vec<Vec<f64>> = (0..1000)
            .map(|_| mu.iter().map(|m| m + noise.sample(&mut rng)).collect())
            .collect();
        let mean = column_mean(&draws).unwrap();
        for (m, target) in mean.iter().zip(mu) {
            assert!((m - target).abs() < 0.02);
        }
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn double_inverse_is_identity(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = well_conditioned(&mut rng, n);
            let back = m.invert().unwrap().invert().unwrap();
            prop_assert!(back.max_abs_diff(&m) < 1e-6);
        }

        #[test]
        fn inverse_is_two_sided(seed in any::<u64>(), n in 1usize..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = well_conditioned(&mut rng, n);
            let inv = m.invert().unwrap();
            prop_assert!(m.matmul(&inv).unwrap().max_abs_diff(&Matrix::identity(n)) < 1e-8);
            prop_assert!(inv.matmul(&m).unwrap().max_abs_diff(&Matrix::identity(n)) < 1e-8);
        }

        #[test]
        fn matmul_associative(seed in any::<u64>(), a in 1usize..32, b in 1usize..32, c in 1usize..32, d in 1usize..32) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, a, b, -10.0, 10.0);
            let y = random_matrix(&mut rng, b, c, -10.0, 10.0);
            let z = random_matrix(&mut rng, c, d, -10.0, 10.0);
            let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
            let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) < 1e-8);
        }
    }
}
