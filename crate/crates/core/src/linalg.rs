//! Small dense linear algebra: row-major matrices, Cholesky factors and
//! triangular solves. Block sizes in a meshed model stay in the tens to low
//! hundreds, so straightforward cache-friendly loops are sufficient.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Cholesky failure: the input was not (numerically) positive definite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    /// Pivot at which factorization broke down.
    pub pivot: usize,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must share a length.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                axpy(a, b, out.row_mut(i));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "mul_vec shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn t_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.rows, x.len(), "t_mul_vec shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            axpy(xr, self.row(r), &mut out);
        }
        out
    }

    /// `L · x` using only the lower triangle (diagonal included).
    pub fn lower_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert!(self.is_square() && self.rows == x.len());
        (0..self.rows).map(|r| dot(&self.row(r)[..=r], &x[..=r])).collect()
    }

    pub fn add_diag(&mut self, value: T) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += value;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `a·self + b·other`, elementwise.
    pub fn blend(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign_matrix(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
    }

    pub fn frobenius_distance(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                let m = (self[(i, j)] + self[(j, i)]) * T::half();
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies rows `r0..r0+nr` and columns `c0..c0+nc`.
    pub fn submatrix(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |r, c| self[(r0 + r, c0 + c)])
    }

    /// Cast between scalar types (used by mixed-precision tests).
    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += a·x`.
#[inline]
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self, NotPositiveDefinite> {
        assert!(a.is_square(), "cholesky of non-square matrix");
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let d = a[(j, j)] - norm_sq(&l.row(j)[..j]);
            if !(d > T::zero()) || !d.is_finite() {
                return Err(NotPositiveDefinite { pivot: j });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let (upper, lower) = l.data.split_at_mut(i * n);
                let lj = &upper[j * n..j * n + j];
                let li = &mut lower[..n];
                let s = a[(i, j)] - dot(&li[..j], lj);
                li[j] = s / djj;
            }
        }
        Ok(Self { l })
    }

    /// Factorizes `A + jitter·I`, trying each jitter in turn.
    pub fn with_jitter(a: &Matrix<T>, jitters: &[T]) -> Result<(Self, T), NotPositiveDefinite> {
        let mut last = NotPositiveDefinite { pivot: 0 };
        for &j in jitters {
            let mut aj = a.clone();
            aj.add_diag(j);
            match Self::new(&aj) {
                Ok(c) => return Ok((c, j)),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    /// Wraps an existing lower-triangular factor with positive diagonal.
    pub fn from_lower(l: Matrix<T>) -> Self {
        debug_assert!(l.is_square());
        Self { l }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    #[inline]
    pub fn lower(&self) -> &Matrix<T> {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = y[i] - dot(&row[..i], &y[..i]);
            y[i] = s / row[i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_lower_t(&self, y: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let row = self.l.row(i);
            let xi = x[i] / row[i];
            x[i] = xi;
            for k in 0..i {
                x[k] -= row[k] * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_lower_t(&self.solve_lower(b))
    }

    /// `L⁻¹ B` for a row-major right-hand side with `dim()` rows.
    pub fn solve_lower_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        assert_eq!(b.rows(), n);
        let mut w = b.clone();
        let m = b.cols();
        for i in 0..n {
            let (done, rest) = w.data.split_at_mut(i * m);
            let wi = &mut rest[..m];
            let li = self.l.row(i);
            for k in 0..i {
                let c = li[k];
                if c != T::zero() {
                    axpy(-c, &done[k * m..(k + 1) * m], wi);
                }
            }
            let inv = T::one() / li[i];
            for v in wi.iter_mut() {
                *v *= inv;
            }
        }
        w
    }

    /// `A⁻¹ B`.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let w = self.solve_lower_matrix(b);
        let n = self.dim();
        let m = b.cols();
        let mut x = w;
        for i in (0..n).rev() {
            let li = self.l.row(i);
            let inv = T::one() / li[i];
            {
                let xi = &mut x.data[i * m..(i + 1) * m];
                for v in xi.iter_mut() {
                    *v *= inv;
                }
            }
            let (head, tail) = x.data.split_at_mut(i * m);
            let xi = &tail[..m];
            for k in 0..i {
                let c = li[k];
                if c != T::zero() {
                    axpy(-c, xi, &mut head[k * m..(k + 1) * m]);
                }
            }
        }
        x
    }

    /// `ln det A = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> T {
        T::two() * self.log_det_sqrt()
    }

    /// `Σ ln L_ii`.
    pub fn log_det_sqrt(&self) -> T {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum()
    }

    /// `bᵀ A⁻¹ b`.
    pub fn quad_form(&self, b: &[T]) -> T {
        norm_sq(&self.solve_lower(b))
    }

    /// `L u`.
    pub fn mul_lower(&self, u: &[T]) -> Vec<T> {
        self.l.lower_mul_vec(u)
    }

    /// `L⁻¹` as a dense lower-triangular matrix.
    pub fn lower_inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            let li = self.l.row(i);
            let d = T::one() / li[i];
            inv[(i, i)] = d;
            for j in 0..i {
                let mut s = T::zero();
                for k in j..i {
                    s += li[k] * inv[(k, j)];
                }
                inv[(i, j)] = -s * d;
            }
        }
        inv
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> Matrix<T> {
        let li = self.lower_inverse();
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        // (L⁻ᵀ L⁻¹)_{ij} = Σ_k Linv_{ki} Linv_{kj}, k ≥ max(i, j)
        for k in 0..n {
            let row = li.row(k);
            for i in 0..=k {
                let a = row[i];
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * n..i * n + k + 1];
                axpy(a, &row[..=k], out_row);
            }
        }
        // only entries j ≤ k were accumulated per k, which covers every (i, j)
        out.symmetrize();
        out
    }

    /// Reconstructs `A = L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            let m = i.min(j);
            dot(&self.l.row(i)[..=m], &self.l.row(j)[..=m])
        })
    }
}
