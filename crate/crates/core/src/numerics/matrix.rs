//! Row-major dense matrix, generic over the floating scalar.

use num_traits::Float;

use super::NumericsError;

/// Row-major dense matrix. `data.len() == rows * cols` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Float> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::BadDataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self, NumericsError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumericsError::BadDataLength {
                    rows: r,
                    cols: c,
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
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

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, rhs: &Matrix<F>) -> Result<Matrix<F>, NumericsError> {
        if self.cols != rhs.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == F::zero() {
                    continue;
                }
                let lhs_row = k * rhs.cols;
                let out_row = i * rhs.cols;
                for j in 0..rhs.cols {
                    out.data[out_row + j] = out.data[out_row + j] + a * rhs.data[lhs_row + j];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix<F> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Matrix<F> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn tanh(&self) -> Matrix<F> {
        self.map(|v| v.tanh())
    }

    pub fn sigmoid(&self) -> Matrix<F> {
        self.map(|v| F::one() / (F::one() + (-v).exp()))
    }

    /// Softmax over each row with max-subtraction for stability.
    pub fn row_softmax(&self) -> Matrix<F> {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.data[r * self.cols..(r + 1) * self.cols];
            let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix<F>) -> Result<Matrix<F>, NumericsError> {
        if self.shape() != rhs.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: F) -> Matrix<F> {
        self.map(|v| v * s)
    }

    /// Horizontal concatenation: `[self | rhs]`.
    pub fn concat_cols(&self, rhs: &Matrix<F>) -> Result<Matrix<F>, NumericsError> {
        if self.rows != rhs.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "concat_cols",
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
                rhs_cols: rhs.cols,
            });
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(rhs.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Rows of `self` selected by `ids`, in order. Repetition is allowed.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Matrix<F>, NumericsError> {
        let mut data = Vec::with_capacity(ids.len() * self.cols);
        for &id in ids {
            if id >= self.rows {
                return Err(NumericsError::RowOutOfRange {
                    index: id,
                    rows: self.rows,
                });
            }
            data.extend_from_slice(self.row(id));
        }
        Ok(Matrix {
            rows: ids.len(),
            cols: self.cols,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    type M = Matrix<f64>;

    fn random(rng: &mut impl Rng, r: usize, c: usize) -> M {
        M::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let m = M::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(M::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_example() {
        let a = M::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = M::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = M::zeros(2, 3);
        let b = M::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn matmul_associative_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random(&mut rng, 5, 5);
            let b = random(&mut rng, 5, 5);
            let c = random(&mut rng, 5, 5);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn row_softmax_symmetry_and_stability() {
        let m = M::from_vec(1, 2, vec![0.0, 0.0]).unwrap().row_softmax();
        assert_eq!(m.data(), &[0.5, 0.5]);

        let big = M::from_vec(1, 2, vec![1000.0, 0.0]).unwrap().row_softmax();
        assert!(big.is_finite());
        assert!(big.get(0, 0) > 1.0 - 1e-12);
        assert!(big.get(0, 1) < 1e-12);

        let ln2 = M::from_vec(1, 2, vec![2.0_f64.ln(), 0.0]).unwrap().row_softmax();
        assert!((ln2.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((ln2.get(0, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn row_softmax_rows_sum_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let m = random(&mut rng, 1, 8).row_softmax();
            let sum: f64 = m.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn elementwise_closed_forms() {
        let m = M::from_vec(1, 3, vec![0.0, 0.5, 0.0]).unwrap();
        let t = m.tanh();
        assert_eq!(t.get(0, 0), 0.0);
        assert!((t.get(0, 1) - 0.462117).abs() < 1e-6);
        let s = m.sigmoid();
        assert_eq!(s.get(0, 2), 0.5);
        for v in s.data() {
            assert!(*v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 3, 5);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn gather_rows_out_of_range() {
        let m = M::zeros(2, 2);
        assert!(m.gather_rows(&[0, 2]).is_err());
    }
}
