//! Dense matrices over a [`Real`] backend and a one-sided Jacobi SVD.
//!
//! One-sided Jacobi acts on columns only, so graded matrices (entries whose
//! magnitudes differ by tens of orders) keep their small singular values to
//! high relative accuracy. Householder bidiagonalization does not.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::precision::{unit_roundoff, Real};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has the wrong length");
        Matrix { rows, cols, data }
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    /// Submatrix on the given row and column index lists (0-based).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize, bits: u32) -> Self {
        Matrix::filled(rows, cols, T::zero_at(bits))
    }

    pub fn identity(n: usize, bits: u32) -> Self {
        Matrix::from_fn(n, n, |i, j| T::from_f64(if i == j { 1.0 } else { 0.0 }, bits))
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(|x| x.to_f64())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            self[(i, j)].clone() + other[(i, j)].clone()
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            self[(i, j)].clone() - other[(i, j)].clone()
        })
    }

    pub fn matmul(&self, other: &Self, bits: u32) -> Self {
        assert_eq!(self.cols, other.rows);
        Matrix::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = T::zero_at(bits);
            for k in 0..self.cols {
                acc = acc + self[(i, k)].clone() * other[(k, j)].clone();
            }
            acc
        })
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self, bits: u32) -> T {
        self.data
            .iter()
            .fold(T::zero_at(bits), |acc, x| acc + x.clone() * x.clone())
    }

    pub fn max_abs(&self, bits: u32) -> T {
        self.data
            .iter()
            .fold(T::zero_at(bits), |acc, x| T::max_of(acc, x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(Real::is_finite)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `M = U diag(s) Vᵀ` for a square `M`; columns of `u` and `v` are the
/// left and right singular vectors, `s` is sorted descending.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

const MAX_SWEEPS: usize = 80;

fn dot<T: Real>(a: &[T], b: &[T], bits: u32) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero_at(bits), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// Rotate columns `a` and `b` in place: `a ← c a − s b`, `b ← s a + c b`.
fn rotate<T: Real>(a: &mut [T], b: &mut [T], c: &T, s: &T) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xa = x.clone();
        let yb = y.clone();
        *x = c.clone() * xa.clone() - s.clone() * yb.clone();
        *y = s.clone() * xa + c.clone() * yb;
    }
}

/// Hestenes one-sided Jacobi on the columns of `m`. Returns the orthogonalized
/// columns and, when requested, the accumulated right rotations.
fn hestenes<T: Real>(m: &Matrix<T>, want_v: bool) -> Result<(Vec<Vec<T>>, Option<Vec<Vec<T>>>)> {
    if !m.is_square() {
        return Err(Error::NumericalFailure("SVD expects a square matrix".into()));
    }
    if !m.all_finite() {
        return Err(Error::NumericalFailure("matrix has non-finite entries".into()));
    }
    let n = m.rows();
    let bits = m.as_slice().first().map(Real::bits).unwrap_or(53);
    let mut w: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| m[(i, j)].clone()).collect())
        .collect();
    let mut v: Option<Vec<Vec<T>>> = want_v.then(|| {
        (0..n)
            .map(|j| (0..n).map(|i| T::from_f64(if i == j { 1.0 } else { 0.0 }, bits)).collect())
            .collect()
    });

    let tol = T::from_f64(unit_roundoff(bits) * (n.max(1) as f64), bits);
    let zero = T::zero_at(bits);
    let one = T::one_at(bits);
    let two = T::from_f64(2.0, bits);

    let mut norms: Vec<T> = w.iter().map(|c| dot(c, c, bits)).collect();
    // Columns below this squared norm are flushed to zero. Without a floor,
    // rounding noise in a null column keeps rotating and shrinking forever
    // under the wide exponent range of extended precision.
    let total = norms.iter().fold(zero.clone(), |acc, x| acc + x.clone());
    let floor = total * T::from_f64(-8.0 * bits as f64 * std::f64::consts::LN_2, bits).exp();
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                for k in [p, q] {
                    if norms[k] != zero && norms[k] <= floor {
                        w[k].iter_mut().for_each(|x| *x = zero.clone());
                        norms[k] = zero.clone();
                    }
                }
                let alpha = norms[p].clone();
                let beta = norms[q].clone();
                if alpha == zero || beta == zero {
                    continue;
                }
                let gamma = dot(&w[p], &w[q], bits);
                if gamma.abs() <= tol.clone() * (alpha.clone() * beta.clone()).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two.clone() * gamma);
                let az = zeta.abs();
                // t = sign(zeta) / (|zeta| + sqrt(1 + zeta^2)), overflow-safe.
                let denom = if az > one {
                    let r = one.clone() / az.clone();
                    az * (one.clone() + (one.clone() + r.clone() * r).sqrt())
                } else {
                    az.clone() + (one.clone() + az.clone() * az).sqrt()
                };
                let mut t = one.clone() / denom;
                if zeta < zero {
                    t = -t;
                }
                let c = one.clone() / (one.clone() + t.clone() * t.clone()).sqrt();
                let s = c.clone() * t;
                let (lo, hi) = w.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], &c, &s);
                if let Some(v) = v.as_mut() {
                    let (lo, hi) = v.split_at_mut(q);
                    rotate(&mut lo[p], &mut hi[0], &c, &s);
                }
                norms[p] = dot(&w[p], &w[p], bits);
                norms[q] = dot(&w[q], &w[q], bits);
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::NumericalFailure(format!(
        "Jacobi SVD did not converge within {MAX_SWEEPS} sweeps"
    )))
}

fn descending_order<T: Real>(s: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

/// Singular values only, sorted descending.
pub fn singular_values<T: Real>(m: &Matrix<T>) -> Result<Vec<T>> {
    let (w, _) = hestenes(m, false)?;
    let bits = m.as_slice().first().map(Real::bits).unwrap_or(53);
    let s: Vec<T> = w.iter().map(|c| dot(c, c, bits).sqrt()).collect();
    Ok(descending_order(&s).into_iter().map(|i| s[i].clone()).collect())
}

/// Full SVD of a square matrix. Left vectors of zero singular values are
/// completed to an orthonormal basis by Gram–Schmidt.
pub fn svd<T: Real>(m: &Matrix<T>) -> Result<Svd<T>> {
    let n = m.rows();
    let bits = m.as_slice().first().map(Real::bits).unwrap_or(53);
    let (w, v) = hestenes(m, true)?;
    let v = v.expect("right rotations requested");
    let s: Vec<T> = w.iter().map(|c| dot(c, c, bits).sqrt()).collect();
    let order = descending_order(&s);
    let zero = T::zero_at(bits);

    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if s[j] > zero {
            u_cols.push(w[j].iter().map(|x| x.clone() / s[j].clone()).collect());
        } else {
            u_cols.push(vec![zero.clone(); n]);
            pending.push(k);
        }
    }
    for &k in &pending {
        u_cols[k] = complete_basis(&u_cols, &pending, k, n, bits)?;
    }

    let u = Matrix::from_fn(n, n, |i, k| u_cols[k][i].clone());
    let vm = Matrix::from_fn(n, n, |i, k| v[order[k]][i].clone());
    Ok(Svd {
        u,
        s: order.iter().map(|&j| s[j].clone()).collect(),
        v: vm,
    })
}

fn complete_basis<T: Real>(
    cols: &[Vec<T>],
    pending: &[usize],
    target: usize,
    n: usize,
    bits: u32,
) -> Result<Vec<T>> {
    let half = T::from_f64(0.5, bits);
    let filled: Vec<&Vec<T>> = cols
        .iter()
        .enumerate()
        .filter(|(k, _)| !pending.contains(k) || *k < target)
        .map(|(_, c)| c)
        .collect();
    for e in 0..n {
        let mut cand: Vec<T> = (0..n)
            .map(|i| T::from_f64(if i == e { 1.0 } else { 0.0 }, bits))
            .collect();
        for _ in 0..2 {
            for c in &filled {
                let proj = dot(c, &cand, bits);
                for (x, y) in cand.iter_mut().zip(c.iter()) {
                    *x = x.clone() - proj.clone() * y.clone();
                }
            }
        }
        let norm = dot(&cand, &cand, bits).sqrt();
        if norm > half {
            return Ok(cand.into_iter().map(|x| x / norm.clone()).collect());
        }
    }
    Err(Error::NumericalFailure("could not complete singular basis".into()))
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::FitUnderdetermined("x and y lengths differ".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if x.len() < 2 || sxx == 0.0 {
        return Err(Error::FitUnderdetermined(
            "need at least two distinct abscissae".into(),
        ));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::Extended;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reconstruct<T: Real>(d: &Svd<T>, bits: u32) -> Matrix<T> {
        let n = d.s.len();
        Matrix::from_fn(n, n, |i, j| {
            let mut acc = T::zero_at(bits);
            for k in 0..n {
                acc = acc + d.u[(i, k)].clone() * d.s[k].clone() * d.v[(j, k)].clone();
            }
            acc
        })
    }

    #[test]
    fn two_by_two_antidiagonal() {
        let m = Matrix::from_row_major(2, 2, vec![0.0, 2.0, 2.0, 0.0]);
        let d = svd(&m).unwrap();
        assert_relative_eq!(d.s[0], 2.0);
        assert_relative_eq!(d.s[1], 2.0);
        let r = reconstruct(&d, 53);
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - m[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_matrix_gets_orthonormal_basis() {
        let m: Matrix<f64> = Matrix::zeros(3, 3, 53);
        let d = svd(&m).unwrap();
        assert!(d.s.iter().all(|&x| x == 0.0));
        let utu = d.u.transpose().matmul(&d.u, 53);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((utu[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn graded_bidiagonal_keeps_relative_accuracy() {
        // Path-graph adjacency with couplings 1, 1e-20, 1e-40: the tiny
        // singular values are products of ratios and must survive.
        let c = [1.0, 1e-20, 1e-40];
        let m = Matrix::from_fn(4, 4, |i, j| {
            if j == i + 1 {
                c[i]
            } else if i == j + 1 {
                c[j]
            } else {
                0.0
            }
        });
        let s = singular_values(&m).unwrap();
        // Exact: eigenvalues ±x of the path with weights a, b, c solve
        // x^4 - (a²+b²+c²) x² + a² c² = 0.
        let (a2, b2, c2) = (1.0f64, 1e-40f64, 1e-80f64);
        let sum = a2 + b2 + c2;
        let small = (a2 * c2 / sum).sqrt();
        assert_relative_eq!(s[3], small, max_relative = 1e-13);
        assert_relative_eq!(s[2], small, max_relative = 1e-13);
    }

    #[test]
    fn extended_backend_matches_double_on_a_random_matrix() {
        let vals = [0.3, -1.2, 0.7, 2.0, 0.1, -0.4, 1.1, 0.9, -0.6];
        let m = Matrix::from_row_major(3, 3, vals.to_vec());
        let me: Matrix<Extended> = m.map(|&x| Extended::from_f64(x, 160));
        let s = singular_values(&m).unwrap();
        let se = singular_values(&me).unwrap();
        for (a, b) in s.iter().zip(&se) {
            assert_relative_eq!(*a, b.to_f64(), max_relative = 1e-14);
        }
    }

    #[test]
    fn extended_rank_deficient_checkerboard_converges() {
        // Odd-sized matrix with checkerboard zeros has a null vector.
        let vals = [0.0, -0.26, 0.0, 0.09, 0.0, -0.26, 0.0, -0.58, 0.0, 0.77, 0.0, -0.58, 0.0, -0.81, 0.0, 0.09,
            0.0, -0.81, 0.0, -0.58, 0.0, 0.77, 0.0, -0.58, 0.0];
        let m = Matrix::from_row_major(5, 5, vals.iter().map(|&x| Extended::from_f64(x, 64)).collect());
        let s = singular_values(&m).unwrap();
        let d = singular_values(&m.map(|x| x.to_f64())).unwrap();
        for (a, b) in s.iter().zip(&d) {
            assert!((a.to_f64() - b).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 2.0);
        assert_relative_eq!(f.intercept, 1.0);
        assert_relative_eq!(f.r_squared, 1.0);
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn svd_reconstructs_and_is_orthogonal(
            n in 1usize..7,
            seed in proptest::collection::vec(-2.0f64..2.0, 36)
        ) {
            let m = Matrix::from_fn(n, n, |i, j| seed[i * 6 + j]);
            let d = svd(&m).unwrap();
            let r = reconstruct(&d, 53);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((r[(i, j)] - m[(i, j)]).abs() < 1e-12);
                }
            }
            let vtv = d.v.transpose().matmul(&d.v, 53);
            let utu = d.u.transpose().matmul(&d.u, 53);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((vtv[(i, j)] - want).abs() < 1e-12);
                    prop_assert!((utu[(i, j)] - want).abs() < 1e-12);
                }
            }
            for w in d.s.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
