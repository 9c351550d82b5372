//! Dense row-major matrices and the decompositions the combiners are built on.
//!
//! The SVD and symmetric eigensolver delegate to `nalgebra`; Cholesky, the
//! whitening reduction of the generalized problem, centering and row
//! normalization are implemented here. All arithmetic is `f64`.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Iteration cap handed to the iterative SVD and eigensolvers.
pub const MAX_ITERATIONS: usize = 10_000;

/// Dense row-major matrix of finite `f64` values with at least one row and one column.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, checking the shape and that every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / cols,
                col: idx % cols,
                value: data[idx],
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    /// All-zero matrix. Panics on a zero dimension.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix {rows}x{cols}");
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

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
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

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Matrix product; panics when inner dimensions disagree.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul of {}x{} by {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        self.row_iter().map(|row| dot(row, x)).collect()
    }

    /// `selfᵀ * x` without materializing the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for (row, &xr) in self.row_iter().zip(x) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v * xr;
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Columns `[0, n)` as a new matrix.
    pub fn leading_columns(&self, n: usize) -> Matrix {
        assert!(n >= 1 && n <= self.cols);
        Matrix::from_fn(self.rows, n, |r, c| self[(r, c)])
    }

    /// Rows `[start, start + n)` as a new matrix.
    pub fn row_block(&self, start: usize, n: usize) -> Matrix {
        assert!(n >= 1 && start + n <= self.rows);
        Matrix {
            rows: n,
            cols: self.cols,
            data: self.data[start * self.cols..(start + n) * self.cols].to_vec(),
        }
    }

    /// Largest `|a_ij - a_ji|`; panics on a non-square matrix.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenpairs sorted by descending eigenvalue; column `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Thin singular value decomposition `m = u · diag(s) · vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows x r`, orthonormal columns.
    pub u: Matrix,
    /// Non-negative, descending, length `r = min(rows, cols)`.
    pub s: Vec<f64>,
    /// `cols x r`, orthonormal columns.
    pub v: Matrix,
}

/// Flips the sign of column `c` of each matrix so that the largest-magnitude
/// entry of `reference` column `c` is positive (first occurrence wins ties).
fn sign_fix_columns(reference: &mut Matrix, companion: Option<&mut Matrix>) {
    let mut flips = Vec::with_capacity(reference.cols);
    for c in 0..reference.cols {
        let mut best = 0.0f64;
        let mut best_val = 0.0;
        for r in 0..reference.rows {
            let v = reference[(r, c)];
            if v.abs() > best {
                best = v.abs();
                best_val = v;
            }
        }
        flips.push(best_val < 0.0);
    }
    for (c, &flip) in flips.iter().enumerate() {
        if flip {
            for r in 0..reference.rows {
                reference[(r, c)] = -reference[(r, c)];
            }
        }
    }
    if let Some(other) = companion {
        for (c, &flip) in flips.iter().enumerate() {
            if flip {
                for r in 0..other.rows {
                    other[(r, c)] = -other[(r, c)];
                }
            }
        }
    }
}

/// Stable order of indices by descending value.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn select_columns(m: &Matrix, order: &[usize]) -> Matrix {
    Matrix::from_fn(m.rows, order.len(), |r, c| m[(r, order[c])])
}

pub fn thin_svd(m: &Matrix) -> Result<Svd> {
    let r = m.rows.min(m.cols);
    let svd = m
        .to_nalgebra()
        .try_svd(true, true, f64::EPSILON, MAX_ITERATIONS)
        .ok_or(Error::NoConvergence {
            algorithm: "singular value decomposition",
            cap: MAX_ITERATIONS,
        })?;
    let u = Matrix::from_nalgebra(svd.u.as_ref().expect("u requested"));
    let v = Matrix::from_nalgebra(&svd.v_t.as_ref().expect("v requested").transpose());
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    debug_assert_eq!(s.len(), r);

    let order = descending_order(&s);
    let s = order.iter().map(|&i| s[i].max(0.0)).collect();
    let mut u = select_columns(&u, &order);
    let mut v = select_columns(&v, &order);
    sign_fix_columns(&mut v, Some(&mut u));
    Ok(Svd { u, s, v })
}

fn symmetry_tolerance(a: &Matrix) -> f64 {
    1e-10 * a.max_abs().max(1.0)
}

pub fn sym_eig_desc(a: &Matrix) -> Result<EigenResult> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let asym = a.max_asymmetry();
    if asym > symmetry_tolerance(a) {
        return Err(Error::Asymmetric(asym));
    }
    let eig = SymmetricEigen::try_new(a.to_nalgebra(), f64::EPSILON, MAX_ITERATIONS).ok_or(
        Error::NoConvergence {
            algorithm: "symmetric eigendecomposition",
            cap: MAX_ITERATIONS,
        },
    )?;
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let vectors = Matrix::from_nalgebra(&eig.eigenvectors);
    let order = descending_order(&values);
    let values = order.iter().map(|&i| values[i]).collect();
    let mut vectors = select_columns(&vectors, &order);
    sign_fix_columns(&mut vectors, None);
    Ok(EigenResult { values, vectors })
}

/// Lower-triangular `L` with `L · Lᵀ = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!(
            "Cholesky needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let asym = a.max_asymmetry();
    if asym > symmetry_tolerance(a) {
        return Err(Error::Asymmetric(asym));
    }
    let n = a.rows;
    // pivots this small relative to the diagonal are rounding noise of an exact zero
    let floor = n as f64 * f64::EPSILON * (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= floor || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L · X = B` for lower-triangular `L`.
fn forward_substitute(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᵀ · X = B` for lower-triangular `L`.
fn backward_substitute_transposed(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `c · θ = ρ · b · θ` for symmetric `c` and symmetric positive definite `b`.
///
/// Whitens with `b = L Lᵀ`, diagonalizes `L⁻¹ c L⁻ᵀ` and maps the vectors back through
/// `L⁻ᵀ`, so the returned eigenvectors are `b`-orthonormal.
pub fn gen_sym_eig(c: &Matrix, b: &Matrix) -> Result<EigenResult> {
    if c.shape() != b.shape() || c.rows != c.cols {
        return Err(Error::Shape(format!(
            "generalized eigenproblem needs equal square matrices, got {}x{} and {}x{}",
            c.rows, c.cols, b.rows, b.cols
        )));
    }
    let asym = c.max_asymmetry();
    if asym > symmetry_tolerance(c) {
        return Err(Error::Asymmetric(asym));
    }
    let l = cholesky(b)?;
    // L⁻¹ c, then L⁻¹ (L⁻¹ c)ᵀ = L⁻¹ c L⁻ᵀ since c is symmetric.
    let half = forward_substitute(&l, c);
    let mut whitened = forward_substitute(&l, &half.transpose());
    let n = whitened.rows;
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (whitened[(i, j)] + whitened[(j, i)]);
            whitened[(i, j)] = avg;
            whitened[(j, i)] = avg;
        }
    }
    let EigenResult { values, vectors } = sym_eig_desc(&whitened)?;
    let mut vectors = backward_substitute_transposed(&l, &vectors);
    sign_fix_columns(&mut vectors, None);
    Ok(EigenResult { values, vectors })
}

/// Per-pair residual `‖c·θ − ρ·b·θ‖_∞ / ((1 + |ρ|) · ‖b‖_F)`.
pub fn gen_eig_residuals(c: &Matrix, b: &Matrix, eig: &EigenResult) -> Vec<f64> {
    let b_norm = b.frobenius_norm();
    eig.values
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let theta = eig.vectors.column(k);
            let ct = c.matvec(&theta);
            let bt = b.matvec(&theta);
            let worst = ct
                .iter()
                .zip(&bt)
                .fold(0.0f64, |m, (x, y)| m.max((x - rho * y).abs()));
            worst / ((1.0 + rho.abs()) * b_norm)
        })
        .collect()
}

pub fn column_means(m: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; m.cols];
    for row in m.row_iter() {
        for (acc, v) in means.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let n = m.rows as f64;
    means.iter_mut().for_each(|v| *v /= n);
    means
}

pub fn column_means_and_center(m: &Matrix) -> (Vec<f64>, Matrix) {
    let means = column_means(m);
    let mut centered = m.clone();
    for r in 0..centered.rows {
        for (v, mu) in centered.row_mut(r).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    (means, centered)
}

/// Row-normalized matrix together with the indices of all-zero rows, which are passed through.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub matrix: Matrix,
    pub zero_rows: Vec<usize>,
}

/// Rows whose norm is already this close to one are left as they are, which
/// makes normalization exactly idempotent.
const UNIT_NORM_TOLERANCE: f64 = 1e-12;

/// Scales one vector to unit norm in place; returns false (leaving it untouched) when it is zero.
pub fn l2_normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n == 0.0 {
        return false;
    }
    if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
        v.iter_mut().for_each(|x| *x /= n);
    }
    true
}

pub fn l2_normalize_rows(m: &Matrix) -> Normalized {
    let mut matrix = m.clone();
    let mut zero_rows = Vec::new();
    for r in 0..matrix.rows {
        if !l2_normalize(matrix.row_mut(r)) {
            zero_rows.push(r);
        }
    }
    if !zero_rows.is_empty() {
        log::warn!("{} zero row(s) left unnormalized", zero_rows.len());
    }
    Normalized { matrix, zero_rows }
}
