//! Dense row-major matrices and the spectral primitives built on them:
//! singular value decomposition, rank-r truncation, principal subspaces,
//! the sin-Θ subspace distance and the effective rank.
//!
//! Factorizations are delegated to `nalgebra`; products and reductions are
//! written directly against the row-major buffer so that the large
//! sample-by-sample similarity computations never copy.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MmclError, Result};

/// Singular values closer than this (relative to the largest) are treated as tied.
pub const GAP_TOL: f64 = 1e-12;

/// A dense matrix of `f64` stored in row-major order.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            let row: Vec<String> = self
                .row(i)
                .iter()
                .take(8)
                .map(|v| format!("{v:.6}"))
                .collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    /// Builds a matrix from row-major entries, rejecting a wrong length or
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MmclError::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MmclError::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix without checking finiteness. The length must match.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length does not match shape"
        );
        Mat { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Mat::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
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
        Mat { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(MmclError::InvalidInput("ragged rows".into()));
        }
        Mat::new(r, c, rows.concat())
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

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let (n, m) = (self.rows, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Mat::from_raw(n, m, out)
    }

    /// `self · otherᵀ`, computed as row-by-row dot products.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t: column counts differ");
        let (n, m) = (self.rows, other.rows);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a = self.row(i);
            let orow = &mut out[i * m..(i + 1) * m];
            for (j, o) in orow.iter_mut().enumerate() {
                *o = dot(a, other.row(j));
            }
        }
        Mat::from_raw(n, m, out)
    }

    /// `selfᵀ · other`, accumulated as a sum of row outer products.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul: row counts differ");
        let (n, m) = (self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &bv) in out[i * m..(i + 1) * m].iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Mat::from_raw(n, m, out)
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!(self.shape(), other.shape(), "add: shapes differ");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Mat::from_raw(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!(self.shape(), other.shape(), "sub: shapes differ");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Mat::from_raw(self.rows, self.cols, data)
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * c).collect(),
        )
    }

    /// In-place `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &Mat) {
        assert_eq!(self.shape(), other.shape(), "axpy: shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn frobenius_dot(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "frobenius_dot: shapes differ");
        dot(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    /// Column means, one per column.
    pub fn col_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Copy with every column shifted to zero mean.
    pub fn centered(&self) -> Mat {
        let means = self.col_means();
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, m) in out.row_mut(i).iter_mut().zip(&means) {
                *v -= m;
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat::from_raw(idx.len(), self.cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "vstack: column counts differ");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat::from_raw(self.rows + other.rows, self.cols, data)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin singular value decomposition `a = u · diag(s) · vᵀ` with
/// `min(rows, cols)` triplets.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Mat {
        let us = Mat::from_fn(self.u.rows(), self.s.len(), |i, j| {
            self.u[(i, j)] * self.s[j]
        });
        us.matmul_t(&self.v)
    }

    /// Keeps the leading `r` triplets.
    pub fn truncate(&self, r: usize) -> SvdResult {
        let keep: Vec<usize> = (0..r.min(self.s.len())).collect();
        SvdResult {
            u: self.u.select_cols(&keep),
            s: self.s[..keep.len()].to_vec(),
            v: self.v.select_cols(&keep),
        }
    }
}

/// Singular value decomposition with singular values sorted in decreasing
/// order. Each right singular vector is signed so that its entry of largest
/// magnitude (lowest index on ties) is nonnegative; the matching left vector
/// is flipped with it.
pub fn svd(a: &Mat) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(MmclError::InvalidInput(
            "svd of a matrix with non-finite entries".into(),
        ));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Err(MmclError::InvalidInput("svd of an empty matrix".into()));
    }
    let dec = nalgebra::SVD::new(a.to_dmatrix(), true, true);
    let u_na = dec.u.expect("left singular vectors requested");
    let vt_na = dec.v_t.expect("right singular vectors requested");
    let k = dec.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| {
        dec.singular_values[y]
            .partial_cmp(&dec.singular_values[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });

    let mut u = Mat::zeros(a.rows(), k);
    let mut v = Mat::zeros(a.cols(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        s.push(dec.singular_values[src].max(0.0));
        let mut pivot = 0;
        for j in 0..a.cols() {
            if vt_na[(src, j)].abs() > vt_na[(src, pivot)].abs() {
                pivot = j;
            }
        }
        let sign = if vt_na[(src, pivot)] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..a.cols() {
            v[(j, dst)] = sign * vt_na[(src, j)];
        }
        for i in 0..a.rows() {
            u[(i, dst)] = sign * u_na[(i, src)];
        }
    }
    Ok(SvdResult { u, s, v })
}

fn check_rank(r: usize, max: usize) -> Result<()> {
    if r == 0 || r > max {
        Err(MmclError::InvalidRank { r, max })
    } else {
        Ok(())
    }
}

/// Best rank-`r` approximation `Σ_{j≤r} s_j u_j v_jᵀ`.
pub fn svd_top_r(a: &Mat, r: usize) -> Result<Mat> {
    check_rank(r, a.rows().min(a.cols()))?;
    Ok(svd(a)?.truncate(r).reconstruct())
}

/// An `r`-dimensional subspace of `R^d` given by an orthonormal basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Subspace {
    basis: Mat,
    /// Set when the subspace was selected among tied singular values and is
    /// therefore one arbitrary choice of several.
    pub degenerate: bool,
}

impl Subspace {
    /// Wraps a `d×r` matrix whose columns must be orthonormal within 1e-9.
    pub fn new(basis: Mat) -> Result<Self> {
        let gram = basis.t_matmul(&basis);
        let err = gram.max_abs_diff(&Mat::identity(basis.cols()));
        if err > 1e-9 {
            return Err(MmclError::InvalidInput(format!(
                "basis columns are not orthonormal (max deviation {err:.3e})"
            )));
        }
        Ok(Subspace {
            basis,
            degenerate: false,
        })
    }

    /// Orthonormalizes the columns of `m` (thin QR, `R` diagonal made positive).
    pub fn from_span(m: &Mat) -> Result<Self> {
        if m.cols() > m.rows() {
            return Err(MmclError::InvalidRank {
                r: m.cols(),
                max: m.rows(),
            });
        }
        let qr = m.to_dmatrix().qr();
        let q = qr.q();
        let r = qr.r();
        let mut basis = Mat::from_dmatrix(&q);
        for j in 0..basis.cols() {
            if r[(j, j)] < 0.0 {
                for i in 0..basis.rows() {
                    basis[(i, j)] = -basis[(i, j)];
                }
            }
        }
        Subspace::new(basis)
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// Orthogonal projector `U Uᵀ`.
    pub fn projector(&self) -> Mat {
        self.basis.matmul_t(&self.basis)
    }
}

/// Extends orthonormal columns `q` (`d×m`) to `target` orthonormal columns by
/// Gram–Schmidt against the standard basis.
fn complete_basis(q: &Mat, target: usize) -> Mat {
    let d = q.rows();
    let mut cols: Vec<Vec<f64>> = (0..q.cols()).map(|j| q.col(j)).collect();
    for e in 0..d {
        if cols.len() >= target {
            break;
        }
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    Mat::from_fn(d, cols.len(), |i, j| cols[j][i])
}

/// Span of the top-`r` right singular vectors of `a`. When `s_r` and
/// `s_{r+1}` coincide the selection is arbitrary and the result is flagged
/// as degenerate.
pub fn right_singular_subspace(a: &Mat, r: usize) -> Result<Subspace> {
    check_rank(r, a.cols())?;
    let dec = svd(a)?;
    let k = dec.s.len();
    let scale = dec.s.first().copied().unwrap_or(0.0).max(1.0);
    let s_at = |j: usize| if j < k { dec.s[j] } else { 0.0 };
    let degenerate = r < a.cols() && (s_at(r - 1) - s_at(r)).abs() <= GAP_TOL * scale;

    let basis = if r <= k {
        dec.v.select_cols(&(0..r).collect::<Vec<_>>())
    } else {
        complete_basis(&dec.v, r)
    };
    Ok(Subspace { basis, degenerate })
}

/// Frobenius sin-Θ distance `sqrt(r − ‖U1ᵀU2‖_F²)` between two subspaces of
/// equal rank, evaluated as `‖U2 − U1U1ᵀU2‖_F` so that nearly identical
/// spans resolve to machine precision.
pub fn sin_theta(u1: &Subspace, u2: &Subspace) -> Result<f64> {
    if u1.ambient_dim() != u2.ambient_dim() || u1.rank() != u2.rank() {
        return Err(MmclError::InvalidInput(format!(
            "sin_theta needs equal shapes, got {}x{} and {}x{}",
            u1.ambient_dim(),
            u1.rank(),
            u2.ambient_dim(),
            u2.rank()
        )));
    }
    let cross = u1.basis.t_matmul(&u2.basis);
    Ok(u2.basis.sub(&u1.basis.matmul(&cross)).frobenius_norm())
}

/// Operator (spectral) norm.
pub fn op_norm(a: &Mat) -> Result<f64> {
    Ok(svd(a)?.s[0])
}

/// `Tr(a) / ‖a‖` for a square matrix.
pub fn effective_rank(a: &Mat) -> Result<f64> {
    if a.rows() != a.cols() {
        return Err(MmclError::InvalidInput(format!(
            "effective rank needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let norm = op_norm(a)?;
    if norm == 0.0 {
        return Err(MmclError::DivideByZero(
            "effective rank of the zero matrix".into(),
        ));
    }
    Ok(a.trace() / norm)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in decreasing
/// order; eigenvectors are the columns of the returned matrix.
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if a.rows() != a.cols() {
        return Err(MmclError::InvalidInput(
            "symmetric eigen needs a square matrix".into(),
        ));
    }
    if !a.is_finite() {
        return Err(MmclError::InvalidInput("non-finite entries".into()));
    }
    let sym = a.add(&a.transpose()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym.to_dmatrix());
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = Mat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    for j in 0..n {
        let mut pivot = 0;
        for i in 0..n {
            if vectors[(i, j)].abs() > vectors[(pivot, j)].abs() {
                pivot = i;
            }
        }
        if vectors[(pivot, j)] < 0.0 {
            for i in 0..n {
                vectors[(i, j)] = -vectors[(i, j)];
            }
        }
    }
    Ok((values, vectors))
}

/// Symmetric square root of a positive semidefinite matrix; negative
/// eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(a: &Mat) -> Result<Mat> {
    let (vals, vecs) = sym_eigen(a)?;
    let scaled = Mat::from_fn(vecs.rows(), vecs.cols(), |i, j| {
        vecs[(i, j)] * vals[j].max(0.0).sqrt()
    });
    Ok(scaled.matmul_t(&vecs))
}
