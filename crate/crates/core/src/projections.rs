//! Exact orthogonal projectors onto the sets used by the alternating projection
//! engine, all behind the [`Projector`] trait.
//!
//! Each set has a free function computing the projection for explicit
//! parameters and a small struct that fixes those parameters and implements
//! [`Projector`]. Tolerances follow one hierarchy: decompositions are accurate
//! to about `1e-12`, membership tests are run at `1e-8`.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::numerics::{self, fro_norm, DenseMatrix};

/// Feasibility tolerance used by the engine when checking starting points.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A nearest-point map onto a closed set, plus a membership test.
///
/// Implementations are stateless after construction and may be shared across
/// threads.
pub trait Projector: Send + Sync {
    fn name(&self) -> &str;

    /// `(rows, cols)` of the matrices this projector accepts.
    fn shape(&self) -> (usize, usize);

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix>;

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool;
}

fn check_shape(z: &DenseMatrix, shape: (usize, usize), what: &str) -> Result<()> {
    if z.shape() != shape {
        return invalid(format!(
            "{what}: expected a {}x{} matrix, got {}x{}",
            shape.0,
            shape.1,
            z.rows(),
            z.cols()
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Box

/// Entrywise clamp of `z` into `[lower, upper]`.
pub fn project_box(
    z: &DenseMatrix,
    lower: &DenseMatrix,
    upper: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_box_bounds(lower, upper)?;
    check_shape(z, lower.shape(), "box projection")?;
    let out = z
        .as_matrix()
        .zip_zip_map(lower.as_matrix(), upper.as_matrix(), |v, lo, hi| {
            v.clamp(lo, hi)
        });
    Ok(DenseMatrix::from_raw(out))
}

fn check_box_bounds(lower: &DenseMatrix, upper: &DenseMatrix) -> Result<()> {
    if lower.shape() != upper.shape() {
        return invalid("box bounds have different shapes");
    }
    if lower
        .as_matrix()
        .iter()
        .zip(upper.as_matrix().iter())
        .any(|(lo, hi)| lo > hi)
    {
        return invalid("box lower bound exceeds upper bound");
    }
    Ok(())
}

/// Axis-aligned box `{z : lower ≤ z ≤ upper}`.
#[derive(Debug, Clone)]
pub struct BoxSet {
    lower: DenseMatrix,
    upper: DenseMatrix,
}

impl BoxSet {
    pub fn new(lower: DenseMatrix, upper: DenseMatrix) -> Result<Self> {
        check_box_bounds(&lower, &upper)?;
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    pub fn upper(&self) -> &DenseMatrix {
        &self.upper
    }
}

impl Projector for BoxSet {
    fn name(&self) -> &str {
        "box"
    }

    fn shape(&self) -> (usize, usize) {
        self.lower.shape()
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        project_box(z, &self.lower, &self.upper)
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        z.shape() == self.shape()
            && z.as_matrix()
                .iter()
                .zip(
                    self.lower
                        .as_matrix()
                        .iter()
                        .zip(self.upper.as_matrix().iter()),
                )
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }
}

/// A box in a rotated orthonormal frame: `{Q·u : lower ≤ u ≤ upper}` in ℝᵈ.
///
/// Projection is `Q · clamp(Qᵀ z)`, exact because `Q` is orthogonal.
#[derive(Debug, Clone)]
pub struct OrientedBox {
    frame: DMatrix<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl OrientedBox {
    /// `frame` must be a square orthogonal matrix whose columns are the box axes.
    pub fn new(frame: DenseMatrix, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = frame.rows();
        if frame.cols() != d || lower.len() != d || upper.len() != d {
            return invalid("oriented box needs a square frame and bounds of matching length");
        }
        let q = frame.into_matrix();
        let err = (q.transpose() * &q - DMatrix::identity(d, d)).amax();
        if err > 1e-10 {
            return invalid(format!(
                "oriented box frame is not orthogonal (error {err:e})"
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(lo, hi)| lo > hi || !lo.is_finite() || !hi.is_finite())
        {
            return invalid("oriented box bounds must be finite with lower ≤ upper");
        }
        Ok(Self {
            frame: q,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Maps box coordinates `u` to the ambient point `Q·u`.
    pub fn point_from_coords(&self, u: &[f64]) -> DenseMatrix {
        DenseMatrix::from_raw(&self.frame * nalgebra::DMatrix::from_column_slice(u.len(), 1, u))
    }
}

impl Projector for OrientedBox {
    fn name(&self) -> &str {
        "oriented-box"
    }

    fn shape(&self) -> (usize, usize) {
        (self.dim(), 1)
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(z, self.shape(), "oriented box projection")?;
        let mut u = self.frame.tr_mul(z.as_matrix());
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
        Ok(DenseMatrix::from_raw(&self.frame * u))
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        if z.shape() != self.shape() {
            return false;
        }
        let slack = tol * (1.0 + fro_norm(z));
        let u = self.frame.tr_mul(z.as_matrix());
        u.iter()
            .enumerate()
            .all(|(i, v)| *v >= self.lower[i] - slack && *v <= self.upper[i] + slack)
    }
}

// ---------------------------------------------------------------------------
// Halfspace

/// Projection onto `{z : ⟨normal, z⟩ ≤ offset}` (Frobenius inner product).
pub fn project_halfspace(
    z: &DenseMatrix,
    normal: &DenseMatrix,
    offset: f64,
) -> Result<DenseMatrix> {
    check_shape(z, normal.shape(), "halfspace projection")?;
    let nn = normal.inner(normal);
    if nn == 0.0 {
        return invalid("halfspace normal must be nonzero");
    }
    let excess = normal.inner(z) - offset;
    if excess <= 0.0 {
        return Ok(z.clone());
    }
    Ok(DenseMatrix::from_raw(
        z.as_matrix() - normal.as_matrix() * (excess / nn),
    ))
}

#[derive(Debug, Clone)]
pub struct HalfSpace {
    normal: DenseMatrix,
    offset: f64,
}

impl HalfSpace {
    pub fn new(normal: DenseMatrix, offset: f64) -> Result<Self> {
        if fro_norm(&normal) == 0.0 {
            return invalid("halfspace normal must be nonzero");
        }
        if !offset.is_finite() {
            return invalid("halfspace offset must be finite");
        }
        Ok(Self { normal, offset })
    }
}

impl Projector for HalfSpace {
    fn name(&self) -> &str {
        "halfspace"
    }

    fn shape(&self) -> (usize, usize) {
        self.normal.shape()
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        project_halfspace(z, &self.normal, self.offset)
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        z.shape() == self.shape()
            && self.normal.inner(z) - self.offset
                <= tol * fro_norm(&self.normal) * (1.0 + fro_norm(z))
    }
}

// ---------------------------------------------------------------------------
// Affine subspace

/// Orthonormal basis of the column span of `basis`, or an error if the
/// columns are (numerically) dependent.
fn orthonormal_basis(basis: &DenseMatrix) -> Result<DMatrix<f64>> {
    if basis.cols() > basis.rows() {
        return Err(Error::InvalidInput(format!(
            "affine basis has {} columns in dimension {}; columns cannot be independent",
            basis.cols(),
            basis.rows()
        )));
    }
    let qr = basis.as_matrix().clone().qr();
    let r = qr.r();
    let scale = (0..r.ncols()).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..r.ncols()).any(|j| r[(j, j)].abs() <= 1e-12 * scale) || scale == 0.0 {
        return invalid("affine basis is rank deficient");
    }
    Ok(qr.q())
}

fn affine_apply(z: &DenseMatrix, q: &DMatrix<f64>, point: &DenseMatrix) -> DenseMatrix {
    // vectorized in nalgebra's column-major storage order
    let (rows, cols) = z.shape();
    let diff = nalgebra::DVector::from_iterator(
        rows * cols,
        z.as_matrix()
            .iter()
            .zip(point.as_matrix().iter())
            .map(|(a, b)| a - b),
    );
    let coords = q.tr_mul(&diff);
    let proj = q * coords;
    let out = DMatrix::from_iterator(
        rows,
        cols,
        proj.iter()
            .zip(point.as_matrix().iter())
            .map(|(p, b)| p + b),
    );
    DenseMatrix::from_raw(out)
}

/// Projection onto `point + span(basis)`.
///
/// `basis` columns live in the vectorized space of `z` (entries listed in
/// column-major order), so for column vectors they are ordinary vectors.
pub fn project_affine(
    z: &DenseMatrix,
    basis: &DenseMatrix,
    point: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_shape(z, point.shape(), "affine projection")?;
    if basis.rows() != z.rows() * z.cols() {
        return invalid("affine basis dimension does not match the point");
    }
    let q = orthonormal_basis(basis)?;
    Ok(affine_apply(z, &q, point))
}

/// Affine subspace `point + span(basis)`.
#[derive(Debug, Clone)]
pub struct AffineSet {
    q: DMatrix<f64>,
    point: DenseMatrix,
}

impl AffineSet {
    pub fn new(basis: DenseMatrix, point: DenseMatrix) -> Result<Self> {
        if basis.rows() != point.rows() * point.cols() {
            return invalid("affine basis dimension does not match the point");
        }
        Ok(Self {
            q: orthonormal_basis(&basis)?,
            point,
        })
    }

    /// The line in ℝ² through `offset·(−sin φ, cos φ)` with direction `(cos φ, sin φ)`.
    pub fn line_2d(angle_rad: f64, offset: f64) -> Result<Self> {
        let (s, c) = angle_rad.sin_cos();
        Self::new(
            DenseMatrix::column_vector(&[c, s])?,
            DenseMatrix::column_vector(&[-s * offset, c * offset])?,
        )
    }
}

impl Projector for AffineSet {
    fn name(&self) -> &str {
        "affine"
    }

    fn shape(&self) -> (usize, usize) {
        self.point.shape()
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(z, self.shape(), "affine projection")?;
        Ok(affine_apply(z, &self.q, &self.point))
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        if z.shape() != self.shape() {
            return false;
        }
        let p = affine_apply(z, &self.q, &self.point);
        p.distance(z) <= tol * (1.0 + fro_norm(z))
    }
}

// ---------------------------------------------------------------------------
// Prescribed column norms

/// Squared column-norm targets `c_ℓ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnNormTargets(Vec<f64>);

impl ColumnNormTargets {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return invalid("column norm targets must be non-empty");
        }
        if let Some(bad) = c.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return invalid(format!("column norm targets must be positive, got {bad}"));
        }
        Ok(Self(c))
    }

    pub fn ones(l: usize) -> Self {
        assert!(l > 0, "need at least one column");
        Self(vec![1.0; l])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Rescales each column `ℓ` to Euclidean norm `√c_ℓ`; a zero column becomes `√c_ℓ·e₁`.
pub fn project_column_norms(z: &DenseMatrix, targets: &ColumnNormTargets) -> Result<DenseMatrix> {
    if z.cols() != targets.len() {
        return invalid(format!(
            "matrix has {} columns but {} column norm targets were given",
            z.cols(),
            targets.len()
        ));
    }
    let mut out = z.as_matrix().clone();
    for (j, &c) in targets.as_slice().iter().enumerate() {
        let radius = c.sqrt();
        let norm = out.column(j).norm();
        if norm == 0.0 {
            out.column_mut(j).fill(0.0);
            out[(0, j)] = radius;
        } else {
            out.column_mut(j).scale_mut(radius / norm);
        }
    }
    Ok(DenseMatrix::from_raw(out))
}

/// Matrices with `‖s_ℓ‖² = c_ℓ` for every column.
#[derive(Debug, Clone)]
pub struct ColumnNormSet {
    rows: usize,
    targets: ColumnNormTargets,
}

impl ColumnNormSet {
    pub fn new(rows: usize, targets: ColumnNormTargets) -> Result<Self> {
        if rows == 0 {
            return invalid("column norm set needs at least one row");
        }
        Ok(Self { rows, targets })
    }

    pub fn targets(&self) -> &ColumnNormTargets {
        &self.targets
    }
}

impl Projector for ColumnNormSet {
    fn name(&self) -> &str {
        "column-norms"
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.targets.len())
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(z, self.shape(), "column norm projection")?;
        project_column_norms(z, &self.targets)
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        z.shape() == self.shape()
            && self
                .targets
                .as_slice()
                .iter()
                .enumerate()
                .all(|(j, &c)| (z.column_norm(j).powi(2) - c).abs() <= tol * c.max(1.0))
    }
}

// ---------------------------------------------------------------------------
// Tight frames

/// Nearest `a`-tight frame: `√a·U·Vᵀ` from the thin SVD `z = UΣVᵀ`.
///
/// For a rank-deficient `z` the result is one of several nearest tight
/// frames, chosen by the SVD sign convention.
pub fn project_tight_frame(z: &DenseMatrix, a: f64) -> Result<DenseMatrix> {
    if !(a.is_finite() && a > 0.0) {
        return invalid(format!("tightness parameter must be positive, got {a}"));
    }
    if z.rows() > z.cols() {
        return invalid(format!(
            "tight frame projection needs rows ≤ cols, got {}x{}",
            z.rows(),
            z.cols()
        ));
    }
    let dec = numerics::svd(z)?;
    let polar = dec.u.as_matrix() * dec.v.as_matrix().transpose();
    Ok(DenseMatrix::from_raw(polar * a.sqrt()))
}

/// `‖D·Dᵀ − a·I‖_F`.
pub fn tightness_residual(d: &DenseMatrix, a: f64) -> f64 {
    let g = d.as_matrix() * d.as_matrix().transpose();
    (g - DMatrix::<f64>::identity(d.rows(), d.rows()) * a).norm()
}

/// `N×L` matrices with `D·Dᵀ = a·I`.
#[derive(Debug, Clone)]
pub struct TightFrameSet {
    rows: usize,
    cols: usize,
    a: f64,
}

impl TightFrameSet {
    pub fn new(rows: usize, cols: usize, a: f64) -> Result<Self> {
        if rows == 0 || rows > cols {
            return invalid(format!(
                "tight frames need 1 ≤ N ≤ L, got N={rows}, L={cols}"
            ));
        }
        if !(a.is_finite() && a > 0.0) {
            return invalid(format!("tightness parameter must be positive, got {a}"));
        }
        Ok(Self { rows, cols, a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

impl Projector for TightFrameSet {
    fn name(&self) -> &str {
        "tight-frame"
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(z, self.shape(), "tight frame projection")?;
        project_tight_frame(z, self.a)
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        z.shape() == self.shape()
            && tightness_residual(z, self.a) <= tol * self.a.max(1.0) * (self.rows as f64).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Gram matrices of tight frames

/// Result of [`project_gram_tight`].
#[derive(Debug, Clone, PartialEq)]
pub struct GramProjection {
    pub matrix: DenseMatrix,
    /// `λ_N = λ_{N+1}` up to rounding: the nearest point is not unique and
    /// `matrix` is the one picked by the eigensolver's ordering.
    pub ambiguous: bool,
}

/// Nearest Gram matrix of an `a`-tight frame with `n` rows: `a·U_N·U_Nᵀ`
/// from the top-`n` eigenvectors of the symmetric input.
pub fn project_gram_tight(z: &DenseMatrix, n: usize, a: f64) -> Result<GramProjection> {
    if !(a.is_finite() && a > 0.0) {
        return invalid(format!("tightness parameter must be positive, got {a}"));
    }
    let l = z.rows();
    if n == 0 || n > l {
        return invalid(format!("gram projection needs 1 ≤ n ≤ L, got n={n}, L={l}"));
    }
    let eig = numerics::sym_eig_desc(z)?;
    let top = eig.eigvecs.as_matrix().columns(0, n);
    let g = top * top.transpose() * a;
    let g = (&g + g.transpose()) * 0.5;
    let ambiguous = n < l && {
        let scale = eig.eigvals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        eig.eigvals[n - 1] - eig.eigvals[n] <= 1e-12 * scale
    };
    Ok(GramProjection {
        matrix: DenseMatrix::from_raw(g),
        ambiguous,
    })
}

/// Symmetric `L×L` matrices with eigenvalues `(a,…,a,0,…,0)`, `a` repeated `n` times.
#[derive(Debug, Clone)]
pub struct GramTightSet {
    l: usize,
    n: usize,
    a: f64,
}

impl GramTightSet {
    pub fn new(l: usize, n: usize, a: f64) -> Result<Self> {
        if n == 0 || n > l {
            return invalid(format!("gram set needs 1 ≤ n ≤ L, got n={n}, L={l}"));
        }
        if !(a.is_finite() && a > 0.0) {
            return invalid(format!("tightness parameter must be positive, got {a}"));
        }
        Ok(Self { l, n, a })
    }
}

impl Projector for GramTightSet {
    fn name(&self) -> &str {
        "gram-tight"
    }

    fn shape(&self) -> (usize, usize) {
        (self.l, self.l)
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(z, self.shape(), "gram projection")?;
        Ok(project_gram_tight(z, self.n, self.a)?.matrix)
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        if z.shape() != self.shape() || z.asymmetry().is_none_or(|s| s > tol) {
            return false;
        }
        let Ok(eig) = numerics::sym_eig_desc(z) else {
            return false;
        };
        let slack = tol * self.a.max(1.0);
        eig.eigvals.iter().enumerate().all(|(i, &lambda)| {
            let target = if i < self.n { self.a } else { 0.0 };
            (lambda - target).abs() <= slack
        })
    }
}

// ---------------------------------------------------------------------------
// Gram matrices with bounded coherence

/// Projection onto `{H symmetric : diag(H) = 1, |H_ij| ≤ ξ for i ≠ j}`:
/// unit diagonal, off-diagonal entries clipped to `[−ξ, ξ]`.
pub fn project_gram_coherence(z: &DenseMatrix, xi: f64) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&xi) {
        return invalid(format!("coherence bound must lie in [0, 1), got {xi}"));
    }
    let sym = numerics::symmetrized(z)?;
    let n = sym.nrows();
    let out = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            sym[(i, j)].clamp(-xi, xi)
        }
    });
    Ok(DenseMatrix::from_raw(out))
}

#[derive(Debug, Clone)]
pub struct GramCoherenceSet {
    l: usize,
    xi: f64,
}

impl GramCoherenceSet {
    pub fn new(l: usize, xi: f64) -> Result<Self> {
        if l == 0 {
            return invalid("coherence set needs L ≥ 1");
        }
        if !(0.0..1.0).contains(&xi) {
            return invalid(format!("coherence bound must lie in [0, 1), got {xi}"));
        }
        Ok(Self { l, xi })
    }
}

impl Projector for GramCoherenceSet {
    fn name(&self) -> &str {
        "gram-coherence"
    }

    fn shape(&self) -> (usize, usize) {
        (self.l, self.l)
    }

    fn project(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(z, self.shape(), "coherence projection")?;
        project_gram_coherence(z, self.xi)
    }

    fn contains(&self, z: &DenseMatrix, tol: f64) -> bool {
        if z.shape() != self.shape() {
            return false;
        }
        let m = z.as_matrix();
        (0..self.l).all(|i| {
            (m[(i, i)] - 1.0).abs() <= tol
                && (0..i).all(|j| {
                    (m[(i, j)] - m[(j, i)]).abs() <= tol && m[(i, j)].abs() <= self.xi + tol
                })
        })
    }
}
