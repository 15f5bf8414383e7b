//! Dense linear algebra for the small exactness systems.
//!
//! The Newton correctors solve systems of at most a few hundred unknowns, and
//! they have to run in both working precisions, so a hand-rolled row-major
//! matrix with partially pivoted LU is all that is needed here.

use crate::real::Real;

#[derive(Clone, Debug)]
pub struct Matrix<R: Real> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<R>,
}

impl<R: Real> Matrix<R> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![R::zero(); n_rows * n_cols],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.n_cols + j] += v;
    }

    pub fn fill_zero(&mut self) {
        for v in self.data.iter_mut() {
            *v = R::zero();
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("singular linear system (pivot {pivot:e} at column {column})")]
pub struct SingularMatrix {
    pub column: usize,
    pub pivot: f64,
}

/// Solve `A x = b` in place by LU with partial pivoting. `A` is destroyed.
pub fn solve_in_place<R: Real>(a: &mut Matrix<R>, b: &mut [R]) -> Result<(), SingularMatrix> {
    let n = a.n_rows();
    assert_eq!(n, a.n_cols(), "matrix must be square");
    assert_eq!(n, b.len());
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a.get(col, col).abs();
        for row in col + 1..n {
            let mag = a.get(row, col).abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if !(pivot_mag > R::zero()) || !pivot_mag.is_finite() {
            return Err(SingularMatrix {
                column: col,
                pivot: pivot_mag.to_f64(),
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot_row, j));
                a.set(pivot_row, j, tmp);
            }
            b.swap(col, pivot_row);
        }
        let inv = R::one() / a.get(col, col);
        for row in col + 1..n {
            let factor = a.get(row, col) * inv;
            if factor == R::zero() {
                continue;
            }
            a.set(row, col, R::zero());
            for j in col + 1..n {
                let v = a.get(row, j) - factor * a.get(col, j);
                a.set(row, j, v);
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a.get(row, j) * b[j];
        }
        b[row] = acc / a.get(row, row);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::DDouble;

    #[test]
    fn solves_small_f64_system() {
        let mut a = Matrix::zeros(3, 3);
        let rows = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a.set(i, j, *v);
            }
        }
        let mut b = vec![8.0, -11.0, -3.0];
        solve_in_place(&mut a, &mut b).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-13);
        assert!((b[1] - 3.0).abs() < 1e-13);
        assert!((b[2] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn solves_in_extended_precision() {
        let n = 6;
        let mut a = Matrix::<DDouble>::zeros(n, n);
        let mut b = vec![DDouble::ZERO; n];
        // Hilbert-like system with known right-hand side from x = ones.
        for i in 0..n {
            let mut sum = DDouble::ZERO;
            for j in 0..n {
                let v = DDouble::from_ratio(1, (i + j + 1) as i64);
                a.set(i, j, v);
                sum += v;
            }
            b[i] = sum;
        }
        solve_in_place(&mut a, &mut b).unwrap();
        for x in b {
            assert!((x - DDouble::ONE).abs().to_f64() < 1e-24);
        }
    }

    #[test]
    fn reports_singularity() {
        let mut a = Matrix::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        let mut b = vec![1.0, 2.0];
        assert!(solve_in_place(&mut a, &mut b).is_err());
    }
}
