//! Dense numerical kernels shared by the clustering pipeline.
//!
//! Everything here is a pure function of its inputs. Storage and products
//! use `nalgebra`; SVD and symmetric eigendecomposition run through `faer`
//! on a single thread, so results do not depend on the thread pool. The
//! incremental orthogonal basis used by the neighborhood scan and by OMP
//! lives in [`OrthoBasis`].

use std::ops::Index;

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors};
use faer::{Mat, Par};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating orthonormal bases.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Tolerance used when validating symmetric input to the eigensolver.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A dense real matrix whose entries are all finite.
///
/// Storage is column-major, so the points of a data matrix (one per column)
/// are contiguous slices, see [`RealMatrix::column`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct RealMatrix(DMatrix<f64>);

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    /// Column-major entries.
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for RealMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        RealMatrix::from_column_major(raw.rows, raw.cols, raw.data)
    }
}

impl From<RealMatrix> for RawMatrix {
    fn from(m: RealMatrix) -> Self {
        RawMatrix {
            rows: m.rows(),
            cols: m.cols(),
            data: m.0.as_slice().to_vec(),
        }
    }
}

impl RealMatrix {
    /// Build from column-major entries.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_vec(rows, cols, data))
    }

    /// Build from row-major nested rows; convenient for literals in tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::from_dmatrix(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    /// Build from equally sized columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let nrows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != nrows) {
            return Err(Error::invalid("columns of different lengths"));
        }
        let data = columns.iter().flatten().copied().collect();
        Self::from_column_major(nrows, columns.len(), data)
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % m.nrows().max(1), pos / m.nrows().max(1));
            return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
        }
        Ok(RealMatrix(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        RealMatrix(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.rows();
        &self.0.as_slice()[j * m..(j + 1) * m]
    }

    /// Column-major view of all entries.
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> RealMatrix {
        RealMatrix(self.0.transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Gather a subset of columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> RealMatrix {
        let m = self.rows();
        let mut data = Vec::with_capacity(m * idx.len());
        for &j in idx {
            data.extend_from_slice(self.column(j));
        }
        RealMatrix(DMatrix::from_vec(m, idx.len(), data))
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Eigenpairs of a symmetric matrix in ascending eigenvalue order.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// One unit-norm eigenvector per column, aligned with `eigenvalues`.
    pub eigenvectors: RealMatrix,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Default relative cutoff for [`pseudo_inverse`].
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols) as f64
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD `A = U diag(s) Vᵀ`, singular values descending.
fn thin_svd(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut u = Mat::<f64>::zeros(m, k);
    let mut v = Mat::<f64>::zeros(n, k);
    let mut s = Diag::<f64>::zeros(k);
    let scratch = svd_scratch::<f64>(
        m,
        n,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        Par::Seq,
        Default::default(),
    );
    svd(
        to_faer(a).as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = s.column_vector().iter().copied().collect();
    Ok((s, from_faer(u.as_ref()), from_faer(v.as_ref())))
}

/// Singular values, descending.
fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    let mut s = Diag::<f64>::zeros(m.min(n));
    let scratch = svd_scratch::<f64>(
        m,
        n,
        ComputeSvdVectors::No,
        ComputeSvdVectors::No,
        Par::Seq,
        Default::default(),
    );
    svd(
        to_faer(a).as_ref(),
        s.as_mut(),
        None,
        None,
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    Ok(s.column_vector().iter().copied().collect())
}

/// Eigenpairs of a symmetric matrix, read from its lower triangle.
fn faer_symmetric_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = Diag::<f64>::zeros(n);
    let scratch =
        self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::Yes, Par::Seq, Default::default());
    self_adjoint_evd(
        to_faer(a).as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Numerical(format!("eigensolver did not converge: {e:?}")))?;
    Ok((
        s.column_vector().iter().copied().collect(),
        from_faer(u.as_ref()),
    ))
}

/// Moore–Penrose pseudo-inverse through the SVD.
///
/// Singular values at or below `rank_tol` times the largest singular value
/// are treated as zero.
pub fn pseudo_inverse(m: &RealMatrix, rank_tol: f64) -> Result<RealMatrix> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::invalid("pseudo-inverse of an empty matrix"));
    }
    if rank_tol.is_nan() || rank_tol <= 0.0 {
        return Err(Error::invalid(format!(
            "rank_tol must be positive, got {rank_tol}"
        )));
    }
    let (s, u, v) = thin_svd(&m.0)?;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let cutoff = rank_tol * smax;
    let mut pinv = DMatrix::zeros(m.cols(), m.rows());
    for (k, &sk) in s.iter().enumerate() {
        if sk > cutoff && sk > 0.0 {
            // pinv += v_k u_kᵀ / s_k
            pinv.ger(1.0 / sk, &v.column(k), &u.column(k), 1.0);
        }
    }
    RealMatrix::from_dmatrix(pinv)
        .map_err(|_| Error::Numerical("pseudo-inverse produced non-finite entries".into()))
}

/// Orthonormal basis grown one column at a time.
///
/// Each pushed column is orthogonalized against the current basis with
/// two sweeps of modified Gram–Schmidt. Columns that are numerically in the
/// span of the basis are rejected; the triangular factor is kept only while
/// every pushed column was accepted, which is what [`OrthoBasis::solve`]
/// needs for a least-squares fit.
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    dim: usize,
    /// Orthonormal vectors, each `dim` long, stored back to back.
    q: Vec<f64>,
    /// Upper-triangular factor, column `k` holds `k + 1` entries.
    r: Vec<Vec<f64>>,
    full_rank: bool,
}

/// Columns whose component orthogonal to the basis is below this fraction of
/// their norm are treated as dependent.
const DEPENDENCE_TOL: f64 = 1e-10;

impl OrthoBasis {
    pub fn new(dim: usize) -> Self {
        OrthoBasis {
            dim,
            q: Vec::new(),
            r: Vec::new(),
            full_rank: true,
        }
    }

    pub fn rank(&self) -> usize {
        self.q.len() / self.dim.max(1)
    }

    /// Whether every column pushed so far was linearly independent.
    pub fn is_full_rank(&self) -> bool {
        self.full_rank
    }

    fn basis_vector(&self, k: usize) -> &[f64] {
        &self.q[k * self.dim..(k + 1) * self.dim]
    }

    /// Remove the components along the basis from `w` in place, accumulating
    /// the removed coefficients into `coeffs` when provided.
    fn project_out(&self, w: &mut [f64], mut coeffs: Option<&mut [f64]>) {
        let k = self.q.len() / self.dim.max(1);
        for _ in 0..2 {
            for i in 0..k {
                let qi = self.basis_vector(i);
                let c = dot(qi, w);
                for (wv, qv) in w.iter_mut().zip(qi) {
                    *wv -= c * qv;
                }
                if let Some(cs) = coeffs.as_deref_mut() {
                    cs[i] += c;
                }
            }
        }
    }

    /// Add a column; returns `false` when it is numerically dependent.
    pub fn push(&mut self, col: &[f64]) -> bool {
        assert_eq!(col.len(), self.dim, "column length mismatch");
        let col_norm = norm2(col);
        let k = self.q.len() / self.dim.max(1);
        let mut w = col.to_vec();
        let mut coeffs = vec![0.0; k + 1];
        self.project_out(&mut w, Some(&mut coeffs[..k]));
        let w_norm = norm2(&w);
        if col_norm == 0.0 || w_norm <= DEPENDENCE_TOL * col_norm {
            self.full_rank = false;
            return false;
        }
        self.q.extend(w.iter().map(|v| v / w_norm));
        coeffs[k] = w_norm;
        if self.full_rank {
            self.r.push(coeffs);
        }
        true
    }

    /// Append a vector already known to be unit norm and orthogonal to the
    /// basis. It is stored bit for bit.
    pub fn push_orthonormal(&mut self, q: &[f64]) {
        assert_eq!(q.len(), self.dim, "column length mismatch");
        let k = self.rank();
        self.q.extend_from_slice(q);
        if self.full_rank {
            let mut col = vec![0.0; k + 1];
            col[k] = 1.0;
            self.r.push(col);
        }
    }

    /// Most recently added orthonormal vector.
    pub fn last(&self) -> Option<&[f64]> {
        let k = self.rank();
        (k > 0).then(|| self.basis_vector(k - 1))
    }

    /// The orthonormal vectors as columns of a `dim × rank` matrix.
    pub fn to_matrix(&self) -> RealMatrix {
        RealMatrix(DMatrix::from_column_slice(self.dim, self.rank(), &self.q))
    }

    /// Component of `x` orthogonal to the span of the basis.
    pub fn residual_vector(&self, x: &[f64]) -> Vec<f64> {
        let mut w = x.to_vec();
        self.project_out(&mut w, None);
        w
    }

    /// Distance from `x` to the span of the basis.
    pub fn residual(&self, x: &[f64]) -> f64 {
        norm2(&self.residual_vector(x)).min(norm2(x))
    }

    /// Least-squares coefficients of `x` against the pushed columns, in push
    /// order. `None` when some pushed column was dependent.
    pub fn solve(&self, x: &[f64]) -> Option<Vec<f64>> {
        if !self.full_rank {
            return None;
        }
        let k = self.r.len();
        let mut c: Vec<f64> = (0..k).map(|i| dot(self.basis_vector(i), x)).collect();
        for i in (0..k).rev() {
            let mut acc = c[i];
            for (j, cj) in c.iter().enumerate().skip(i + 1) {
                acc -= self.r[j][i] * cj;
            }
            c[i] = acc / self.r[i][i];
        }
        Some(c)
    }
}

/// Minimum-norm least-squares coefficients `pinv(cols) x`.
pub fn least_squares(cols: &RealMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if cols.rows() != x.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} rows vs vector of length {}",
            cols.rows(),
            x.len()
        )));
    }
    let pinv = pseudo_inverse(cols, default_rank_tol(cols.rows(), cols.cols()))?;
    let xv = DVector::from_column_slice(x);
    Ok((pinv.as_dmatrix() * xv).as_slice().to_vec())
}

/// Euclidean distance from `x` to the column span of `basis_cols`.
pub fn span_residual(basis_cols: &RealMatrix, x: &[f64]) -> Result<f64> {
    if basis_cols.rows() != x.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: basis has {} rows, vector has length {}",
            basis_cols.rows(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry in vector"));
    }
    let mut basis = OrthoBasis::new(x.len());
    for j in 0..basis_cols.cols() {
        basis.push(basis_cols.column(j));
    }
    Ok(basis.residual(x))
}

/// Largest absolute entry of `UᵀU − I`.
fn orthonormality_defect(u: &RealMatrix) -> f64 {
    let g = u.0.tr_mul(&u.0);
    let mut worst: f64 = 0.0;
    for ((i, j), v) in g
        .iter()
        .enumerate()
        .map(|(p, v)| ((p % g.nrows(), p / g.nrows()), v))
    {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

/// Fail unless `u` has orthonormal columns to [`ORTHONORMAL_TOL`].
pub fn check_orthonormal(u: &RealMatrix) -> Result<()> {
    let defect = orthonormality_defect(u);
    if defect > ORTHONORMAL_TOL {
        return Err(Error::invalid(format!(
            "columns are not orthonormal (max |UᵀU − I| entry {defect:.3e})"
        )));
    }
    Ok(())
}

/// Cosines of the principal angles, i.e. singular values of `UᵀV` clamped to
/// [0, 1], in descending order.
pub(crate) fn principal_cosines(u: &RealMatrix, v: &RealMatrix) -> Result<Vec<f64>> {
    if u.rows() != v.rows() {
        return Err(Error::invalid(format!(
            "bases live in different ambient spaces ({} vs {} rows)",
            u.rows(),
            v.rows()
        )));
    }
    check_orthonormal(u)?;
    check_orthonormal(v)?;
    let k = u.cols().min(v.cols());
    if k == 0 {
        return Ok(Vec::new());
    }
    let cross = u.0.tr_mul(&v.0);
    let mut s: Vec<f64> = singular_values(&cross)?
        .into_iter()
        .map(|c| c.clamp(0.0, 1.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.truncate(k);
    Ok(s)
}

/// Principal angles between the column spans of `u` and `v`, ascending.
pub fn principal_angles(u: &RealMatrix, v: &RealMatrix) -> Result<Vec<f64>> {
    Ok(principal_cosines(u, v)?
        .into_iter()
        .map(f64::acos)
        .collect())
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back ascending (ties keep the solver's order) and each
/// eigenvector is sign-normalized so that its first component above 1e-12 in
/// magnitude is positive.
pub fn symmetric_eigen(m: &RealMatrix) -> Result<SpectrumResult> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::invalid(format!(
            "matrix is {}x{}, not square",
            n,
            m.cols()
        )));
    }
    for j in 0..n {
        for i in j + 1..n {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            if diff > SYMMETRY_TOL {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric: |M[{i},{j}] − M[{j},{i}]| = {diff:.3e}"
                )));
            }
        }
    }
    if n == 0 {
        return Ok(SpectrumResult {
            eigenvalues: Vec::new(),
            eigenvectors: RealMatrix::zeros(0, 0),
        });
    }
    let (values, vecs) = faer_symmetric_eigen(&m.0)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = vecs.column(src);
        let norm = col.norm();
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-12)
            .map_or(1.0, |v| v.signum());
        vectors.set_column(dst, &(col * (sign / norm)));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "eigensolver produced non-finite eigenvalues".into(),
        ));
    }
    let eigenvectors = RealMatrix::from_dmatrix(vectors)
        .map_err(|_| Error::Numerical("eigensolver produced non-finite eigenvectors".into()))?;
    Ok(SpectrumResult {
        eigenvalues,
        eigenvectors,
    })
}
