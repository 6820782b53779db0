//! Dense column-major matrices and the factorizations the rest of the crate
//! needs: Householder QR, one-sided Jacobi SVD and SVD-based least squares.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{check_dim, Error, Result};
use crate::math::{hypot, sqrt};

/// Dense `f64` matrix in column-major order.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:>12.5e} ", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + i * n] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix buffer length", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices. Panics on ragged input; intended for
    /// small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            check_dim("column length", rows, c.len())?;
            data.extend_from_slice(c);
        }
        Ok(Matrix {
            rows,
            cols: columns.len(),
            data,
        })
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
        self.data[i + j * self.rows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.rows] = v;
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
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let rows = self.rows.max(1);
        self.data.chunks_exact(rows).take(if self.rows == 0 { 0 } else { self.cols })
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.data[j + i * self.cols] = self.data[i + j * self.rows];
            }
        }
        t
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for j in 0..self.cols {
            let src = self.col(j);
            for (k, &i) in indices.iter().enumerate() {
                out.data[k + j * indices.len()] = src[i];
            }
        }
        out
    }

    pub fn select_cols(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.rows);
        for &j in indices {
            data.extend_from_slice(self.col(j));
        }
        Matrix {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    /// First `k` columns.
    pub fn leading_cols(&self, k: usize) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("matmul inner dimension", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("matrix-vector product", self.cols, v.len())?;
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                axpy(vj, self.col(j), &mut out);
            }
        }
        Ok(out)
    }

    /// `selfᵀ * v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("transposed matrix-vector product", self.rows, v.len())?;
        Ok(self.columns().map(|c| dot(c, v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c ← alpha · op(a) · op(b) + beta · c`, where `op` optionally transposes.
///
/// Panics if the shapes do not line up.
#[allow(unsafe_code)]
pub fn gemm(alpha: f64, a: &Matrix, trans_a: bool, b: &Matrix, trans_b: bool, beta: f64, c: &mut Matrix) {
    let (m, k, rsa, csa) = if trans_a {
        (a.cols, a.rows, a.rows as isize, 1)
    } else {
        (a.rows, a.cols, 1, a.rows as isize)
    };
    let (kb, n, rsb, csb) = if trans_b {
        (b.cols, b.rows, b.rows as isize, 1)
    } else {
        (b.rows, b.cols, 1, b.rows as isize)
    };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c.data {
            *v = if beta == 0.0 { 0.0 } else { *v * beta };
        }
        return;
    }
    // SAFETY: the strides describe column-major buffers whose extents were
    // checked against (m, k, n) above, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

/// Compact Householder QR of a tall matrix (`rows ≥ cols`).
///
/// Reflectors are stored below the diagonal with an implicit unit leading
/// entry; `R` sits on and above the diagonal.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    packed: Matrix,
    tau: Vec<f64>,
}

impl HouseholderQr {
    pub fn new(a: &Matrix) -> Result<Self> {
        let (m, n) = (a.rows, a.cols);
        if m < n {
            return Err(Error::invalid("Householder QR needs rows >= cols"));
        }
        let mut qr = a.clone();
        let mut tau = vec![0.0; n];
        for k in 0..n {
            let (head, tail) = qr.data.split_at_mut((k + 1) * m);
            let col = &mut head[k * m..];
            let x = &mut col[k..];
            let norm = norm2(x);
            if norm == 0.0 {
                continue;
            }
            let x0 = x[0];
            let beta = if x0 >= 0.0 { -norm } else { norm };
            let t = (beta - x0) / beta;
            let scale = 1.0 / (x0 - beta);
            for v in &mut x[1..] {
                *v *= scale;
            }
            x[0] = beta;
            tau[k] = t;
            let v_tail = &x[1..];
            for j in 0..(n - k - 1) {
                let cj = &mut tail[j * m + k..(j + 1) * m];
                let w = cj[0] + dot(v_tail, &cj[1..]);
                let f = t * w;
                cj[0] -= f;
                axpy(-f, v_tail, &mut cj[1..]);
            }
        }
        Ok(HouseholderQr { packed: qr, tau })
    }

    /// The `cols × cols` upper triangular factor.
    pub fn r(&self) -> Matrix {
        let n = self.packed.cols;
        let mut r = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                r.set(i, j, self.packed.get(i, j));
            }
        }
        r
    }

    /// Computes `Q · b` for `b` with `rows` rows (full `Q`, implicitly).
    pub fn apply_q(&self, b: &mut Matrix) {
        let m = self.packed.rows;
        assert_eq!(b.rows, m);
        for k in (0..self.packed.cols).rev() {
            let t = self.tau[k];
            if t == 0.0 {
                continue;
            }
            let v_tail = &self.packed.col(k)[k + 1..];
            for j in 0..b.cols {
                let cj = &mut b.col_mut(j)[k..];
                let w = cj[0] + dot(v_tail, &cj[1..]);
                let f = t * w;
                cj[0] -= f;
                axpy(-f, v_tail, &mut cj[1..]);
            }
        }
    }
}

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`.
///
/// `s` has `min(rows, cols)` non-increasing entries. `u` may carry fewer
/// columns than `s` when only the leading left vectors were requested.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi on the columns of `w`, accumulating the
/// rotations into `v`. On return the columns of `w` are mutually orthogonal.
fn one_sided_jacobi(w: &mut Matrix, v: &mut Matrix) -> Result<()> {
    let n = w.cols;
    let rows = w.rows;
    let tol = f64::EPSILON * (rows.max(1) as f64);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let wp = w.col(p);
                    let wq = w.col(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * sqrt(alpha) * sqrt(beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + hypot(1.0, zeta));
                let c = 1.0 / hypot(1.0, t);
                let s = c * t;
                rotate_cols(w, p, q, c, s);
                rotate_cols(v, p, q, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::SvdNoConvergence {
        sweeps: JACOBI_MAX_SWEEPS,
    })
}

fn rotate_cols(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows;
    let (lo, hi) = m.data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Extends the orthonormal columns `basis[..filled]` of a square matrix with
/// unit vectors orthogonalized against them.
fn complete_orthonormal(basis: &mut Matrix, filled: &[bool]) {
    let n = basis.rows;
    let mut candidate = 0;
    for j in 0..basis.cols {
        if filled[j] {
            continue;
        }
        while candidate < n {
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for k in 0..basis.cols {
                    if k == j || !(filled[k] || k < j) {
                        continue;
                    }
                    let c = dot(basis.col(k), &e);
                    axpy(-c, basis.col(k), &mut e);
                }
            }
            let nrm = norm2(&e);
            if nrm > 0.5 {
                for x in &mut e {
                    *x /= nrm;
                }
                basis.col_mut(j).copy_from_slice(&e);
                break;
            }
        }
    }
}

/// Singular value decomposition keeping the leading `left` left singular
/// vectors (all of them when `left` is `None`).
pub fn svd(a: &Matrix, left: Option<usize>) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("SVD input".into()));
    }
    if a.rows < a.cols {
        // a = u s vᵀ  ⇔  aᵀ = v s uᵀ
        let t = svd(&a.transpose(), None)?;
        let k = left.unwrap_or(t.s.len()).min(t.s.len());
        return Ok(Svd {
            u: t.v.leading_cols(k),
            s: t.s,
            v: t.u,
        });
    }
    let n = a.cols;
    let k = left.unwrap_or(n).min(n);
    let qr = HouseholderQr::new(a)?;
    let mut w = qr.r();
    let mut v = Matrix::identity(n);
    one_sided_jacobi(&mut w, &mut v)?;

    let norms: Vec<f64> = w.columns().map(norm2).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut ur = Matrix::zeros(n, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut filled = vec![false; n];
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        vs.col_mut(dst).copy_from_slice(v.col(src));
        if sigma > f64::MIN_POSITIVE {
            for (o, x) in ur.col_mut(dst).iter_mut().zip(w.col(src)) {
                *o = x / sigma;
            }
            filled[dst] = true;
        }
    }
    if filled.iter().any(|f| !f) {
        complete_orthonormal(&mut ur, &filled);
    }

    let mut u = Matrix::zeros(a.rows, k);
    for j in 0..k {
        u.col_mut(j)[..n].copy_from_slice(ur.col(j));
    }
    qr.apply_q(&mut u);
    Ok(Svd { u, s, v: vs })
}

/// Ratio of largest to smallest singular value (`∞` when singular).
pub fn condition_number(singular_values: &[f64]) -> f64 {
    match (singular_values.first(), singular_values.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => max / min,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => f64::NAN,
    }
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD.
///
/// Returns the solution and the condition estimate of `a`. Fails with
/// [`Error::Singular`] when `a` is rank deficient to working precision.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_dim("least-squares right-hand side", a.rows, b.len())?;
    let dec = svd(a, None)?;
    let cond = condition_number(&dec.s);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = smax * f64::EPSILON * (a.rows.max(a.cols) as f64);
    if dec.s.iter().any(|&x| x <= cutoff) {
        return Err(Error::Singular { condition: cond });
    }
    let utb = dec.u.tr_mul_vec(b)?;
    let scaled: Vec<f64> = utb.iter().zip(&dec.s).map(|(c, s)| c / s).collect();
    let x = dec.v.mul_vec(&scaled)?;
    Ok((x, cond))
}
