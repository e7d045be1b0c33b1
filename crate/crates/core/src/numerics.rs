//! Dense linear-algebra kernels.
//!
//! Every decomposition here applies one sign convention so that projector
//! outputs are reproducible: for each singular/eigen vector, the entry of
//! largest magnitude is made nonnegative (ties go to the lowest index). For a
//! singular triple the left and right vectors are flipped together.
//!
//! Exactly repeated singular values or eigenvalues still leave the spanning
//! basis of the repeated subspace up to the underlying solver; results are
//! deterministic on one platform but not across platforms in that case.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{invalid, Result};

/// Relative asymmetry admitted by [`sym_eig_desc`] and the symmetric projectors.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A real, finite, non-empty dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    /// Wraps a nalgebra matrix after checking it is non-empty and finite.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return invalid(format!(
                "matrix must be non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
            return invalid(format!("matrix contains non-finite entry {bad}"));
        }
        Ok(Self(m))
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            ));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return invalid("rows have unequal lengths");
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(rows.len(), ncols, &flat)
    }

    /// Column vector from a slice.
    pub fn column_vector(values: &[f64]) -> Result<Self> {
        Self::from_row_slice(values.len(), 1, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix dimensions must be positive");
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Wraps without validation. Callers inside the crate guarantee finiteness
    /// or check it afterwards (the engine does, once per iterate).
    pub(crate) fn from_raw(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Frobenius distance to `other`, which must have the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        (&self.0 - &other.0).norm()
    }

    /// Euclidean norm of column `j`.
    pub fn column_norm(&self, j: usize) -> f64 {
        self.0.column(j).norm()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }

    /// `‖m − mᵀ‖_F`, or `None` for a non-square matrix.
    pub fn asymmetry(&self) -> Option<f64> {
        if self.rows() != self.cols() {
            return None;
        }
        Some((&self.0 - self.0.transpose()).norm())
    }
}

impl From<DenseMatrix> for DMatrix<f64> {
    fn from(m: DenseMatrix) -> Self {
        m.0
    }
}

/// Thin singular value decomposition `m = u · diag(singulars) · vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub singulars: Vec<f64>,
    pub v: DenseMatrix,
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigResult {
    pub eigvals: Vec<f64>,
    pub eigvecs: DenseMatrix,
}

/// Square root of the sum of squared entries.
pub fn fro_norm(m: &DenseMatrix) -> f64 {
    m.0.norm()
}

/// Thin SVD with `min(rows, cols)` singular values in nonincreasing order.
pub fn svd(m: &DenseMatrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return invalid("svd input contains non-finite entries");
    }
    let dec = SVD::new(m.0.clone(), true, true);
    let u = dec.u.expect("left singular vectors requested");
    let v = dec
        .v_t
        .expect("right singular vectors requested")
        .transpose();
    let order = descending_order(dec.singular_values.as_slice());

    let mut u_sorted = DMatrix::zeros(u.nrows(), order.len());
    let mut v_sorted = DMatrix::zeros(v.nrows(), order.len());
    let mut singulars = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v.column(src));
        singulars.push(dec.singular_values[src].max(0.0));
    }
    for j in 0..order.len() {
        if needs_flip(&u_sorted, j) {
            u_sorted.column_mut(j).neg_mut();
            v_sorted.column_mut(j).neg_mut();
        }
    }
    Ok(SvdResult {
        u: DenseMatrix(u_sorted),
        singulars,
        v: DenseMatrix(v_sorted),
    })
}

/// Symmetric eigendecomposition with eigenvalues sorted nonincreasing.
///
/// The input is symmetrized as `(m + mᵀ)/2` after checking that its relative
/// asymmetry is within [`SYMMETRY_TOL`].
pub fn sym_eig_desc(m: &DenseMatrix) -> Result<SymEigResult> {
    let sym = symmetrized(m)?;
    let dec = SymmetricEigen::new(sym);
    let order = descending_order(dec.eigenvalues.as_slice());

    let n = order.len();
    let mut vecs = DMatrix::zeros(n, n);
    let mut eigvals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &dec.eigenvectors.column(src));
        eigvals.push(dec.eigenvalues[src]);
    }
    for j in 0..n {
        if needs_flip(&vecs, j) {
            vecs.column_mut(j).neg_mut();
        }
    }
    Ok(SymEigResult {
        eigvals,
        eigvecs: DenseMatrix(vecs),
    })
}

/// Checks squareness, finiteness and relative asymmetry, then returns `(m + mᵀ)/2`.
pub(crate) fn symmetrized(m: &DenseMatrix) -> Result<DMatrix<f64>> {
    if !m.is_finite() {
        return invalid("symmetric input contains non-finite entries");
    }
    let Some(asym) = m.asymmetry() else {
        return invalid(format!(
            "expected a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        ));
    };
    let scale = fro_norm(m);
    if asym > SYMMETRY_TOL * scale {
        return invalid(format!(
            "matrix is not symmetric: ‖m − mᵀ‖_F = {asym:e} exceeds {SYMMETRY_TOL:e}·‖m‖_F"
        ));
    }
    Ok((&m.0 + m.0.transpose()) * 0.5)
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // stable: equal values keep solver order
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

fn needs_flip(m: &DMatrix<f64>, j: usize) -> bool {
    let col = m.column(j);
    let mut best = 0usize;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    col[best] < 0.0
}
