//! Frame design by alternating projections.
//!
//! Two pipelines:
//!
//! * prescribed column norms: alternate between `a`-tight `N×L` frames and
//!   `N×L` matrices whose squared column norms equal `c`, with `a = Σc/N`;
//! * equiangular tight frames: alternate between Gram matrices of `L/N`-tight
//!   frames and unit-diagonal symmetric matrices whose off-diagonal entries are
//!   bounded by the Welch bound, then factor the final Gram matrix.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::diagnostics::{GuardStatus, GUARD_SLACK};
use crate::engine::{run_alternating_projections, IterateTrace, Metric, RunConfig};
use crate::error::{invalid, Error, Result};
use crate::numerics::{svd, sym_eig_desc, DenseMatrix};
use crate::projections::{
    project_column_norms, project_gram_coherence, project_gram_tight, ColumnNormSet,
    ColumnNormTargets, GramCoherenceSet, GramTightSet, TightFrameSet,
};

pub use crate::projections::tightness_residual;

/// Redraw limit when sampling a full-rank start.
const MAX_DRAWS: usize = 1000;

/// Smallest singular value accepted for a random start.
const START_SIGMA_MIN: f64 = 1e-6;

/// Eigenvalues at or below this are treated as zero when factoring a Gram matrix.
const GRAM_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FrameDesignConfig {
    pub n: usize,
    pub l: usize,
    /// Squared column norms. `None` means unit norms.
    pub c: Option<ColumnNormTargets>,
    pub seed: u64,
    pub run: RunConfig,
}

impl FrameDesignConfig {
    pub fn new(n: usize, l: usize, seed: u64, run: RunConfig) -> Self {
        Self {
            n,
            l,
            c: None,
            seed,
            run,
        }
    }

    pub fn with_targets(mut self, c: ColumnNormTargets) -> Self {
        self.c = Some(c);
        self
    }

    pub fn targets(&self) -> ColumnNormTargets {
        self.c
            .clone()
            .unwrap_or_else(|| ColumnNormTargets::ones(self.l))
    }

    /// Tightness parameter `Σc / N`.
    pub fn a(&self) -> f64 {
        tight_parameter(&self.targets(), self.n)
    }

    /// Welch bound for `(n, l)`.
    pub fn xi(&self) -> Result<f64> {
        welch_bound(self.n, self.l)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l < self.n {
            return invalid(format!(
                "frame design needs 1 ≤ N ≤ L, got N={}, L={}",
                self.n, self.l
            ));
        }
        if let Some(c) = &self.c {
            if c.len() != self.l {
                return invalid(format!("{} column-norm targets for L={}", c.len(), self.l));
            }
        }
        self.run.validate()
    }
}

/// Mid-run certificate for the ETF pipeline: the first recorded iteration with
/// `‖G_k − H_k‖_F² < L²/(2N²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtfCertificate {
    pub k: usize,
    pub nu: f64,
    /// Lower bound `ν/a` on the eigen-gap of every later `H`.
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct FrameDesignResult {
    /// Designed `N×L` frame.
    pub d: DenseMatrix,
    /// Final structured iterate: `S` for prescribed norms, `H` for ETF.
    pub s_or_h: DenseMatrix,
    pub trace: IterateTrace,
    pub coherence: f64,
    pub tightness_residual: f64,
    pub gap: f64,
    pub certificate: Option<EtfCertificate>,
}

/// `√((L − N) / (N(L − 1)))`, the smallest possible coherence of `L` unit vectors in `ℝᴺ`.
pub fn welch_bound(n: usize, l: usize) -> Result<f64> {
    if l < 2 || n == 0 || n > l {
        return invalid(format!(
            "welch bound needs 1 ≤ N ≤ L and L ≥ 2, got N={n}, L={l}"
        ));
    }
    let (n, l) = (n as f64, l as f64);
    Ok(((l - n) / (n * (l - 1.0))).sqrt())
}

/// Largest `|⟨d_i, d_j⟩| / (‖d_i‖‖d_j‖)` over distinct columns.
pub fn mutual_coherence(d: &DenseMatrix) -> Result<f64> {
    let m = d.as_matrix();
    if m.ncols() < 2 {
        return invalid("coherence needs at least two columns");
    }
    let norms: Vec<f64> = (0..m.ncols()).map(|j| m.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|n| *n == 0.0) {
        return invalid(format!("column {j} is zero"));
    }
    let mut mu = 0.0f64;
    for i in 0..m.ncols() {
        for j in i + 1..m.ncols() {
            mu = mu.max(m.column(i).dot(&m.column(j)).abs() / (norms[i] * norms[j]));
        }
    }
    Ok(mu.min(1.0))
}

/// `Σc / N`: the only tightness parameter compatible with squared column norms `c`.
pub fn tight_parameter(c: &ColumnNormTargets, n: usize) -> f64 {
    c.sum() / n as f64
}

/// `λ_n − λ_{n+1}` of a symmetric matrix.
pub fn eigen_gap(h: &DenseMatrix, n: usize) -> Result<f64> {
    if n == 0 || n >= h.rows() {
        return invalid(format!("eigen gap needs 1 ≤ n < {}, got n={n}", h.rows()));
    }
    let eig = sym_eig_desc(h)?;
    Ok(eig.eigvals[n - 1] - eig.eigvals[n])
}

/// Factor `D = √a·U_Nᵀ` of a Gram matrix, from its top-`n` eigenvectors.
pub fn extract_frame_from_gram(g: &DenseMatrix, n: usize, a: f64) -> Result<DenseMatrix> {
    if n == 0 || n > g.rows() {
        return invalid(format!(
            "cannot extract {n} rows from a {}×{} Gram matrix",
            g.rows(),
            g.cols()
        ));
    }
    if !(a.is_finite() && a > 0.0) {
        return invalid(format!("tightness parameter must be positive, got {a}"));
    }
    let eig = sym_eig_desc(g)?;
    if eig.eigvals[n - 1] <= GRAM_RANK_TOL {
        return Err(Error::RankDeficient(format!(
            "eigenvalue {n} of the Gram matrix is {:e}",
            eig.eigvals[n - 1]
        )));
    }
    let top = eig.eigvecs.as_matrix().columns(0, n).transpose() * a.sqrt();
    DenseMatrix::new(top)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum EtfInitialization {
    Certified { nu: f64, threshold: f64 },
    NotCertified { nu: f64 },
}

/// Checks `‖G₀ − H₀‖_F² < L²/(2N²)`; on success `ν` is the slack and `ν/a` the
/// eigen-gap bound that holds along the rest of the run.
pub fn check_etf_initialization(
    g0: &DenseMatrix,
    h0: &DenseMatrix,
    n: usize,
    l: usize,
) -> Result<EtfInitialization> {
    if g0.shape() != (l, l) || h0.shape() != (l, l) {
        return invalid(format!("expected {l}×{l} matrices"));
    }
    if n == 0 || n > l {
        return invalid(format!("need 1 ≤ N ≤ L, got N={n}, L={l}"));
    }
    Ok(etf_certificate(
        (g0.as_matrix() - h0.as_matrix()).norm_squared(),
        n,
        l,
    ))
}

fn etf_certificate(dist_sq: f64, n: usize, l: usize) -> EtfInitialization {
    let (nf, lf) = (n as f64, l as f64);
    let nu = lf * lf / (2.0 * nf * nf) - dist_sq;
    if nu > 0.0 {
        EtfInitialization::Certified {
            nu,
            threshold: nu / (lf / nf),
        }
    } else {
        EtfInitialization::NotCertified { nu }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn sigma_min(m: &DenseMatrix) -> f64 {
    svd(m).map_or(0.0, |s| *s.singulars.last().expect("non-empty"))
}

/// Seeded full-rank start in the prescribed-norm set.
pub fn initial_prescribed_norm_frame(
    n: usize,
    targets: &ColumnNormTargets,
    seed: u64,
) -> Result<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        let z = DenseMatrix::new(standard_normal(&mut rng, n, targets.len()))?;
        let s0 = project_column_norms(&z, targets)?;
        if sigma_min(&s0) > START_SIGMA_MIN {
            return Ok(s0);
        }
    }
    Err(Error::Degenerate(format!(
        "no full-rank start after {MAX_DRAWS} draws"
    )))
}

/// Seeded start `(G₀, H₀)` for the ETF pipeline.
pub fn initial_etf_pair(n: usize, l: usize, seed: u64) -> Result<(DenseMatrix, DenseMatrix)> {
    let xi = welch_bound(n, l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = standard_normal(&mut rng, l, l);
    let sym = DenseMatrix::new((&m + m.transpose()) * 0.5)?;
    let g0 = project_gram_tight(&sym, n, l as f64 / n as f64)?.matrix;
    let h0 = project_gram_coherence(&g0, xi)?;
    Ok((g0, h0))
}

/// Tight frame with prescribed column norms.
pub fn design_prescribed_norm_frame(cfg: &FrameDesignConfig) -> Result<FrameDesignResult> {
    cfg.validate()?;
    let targets = cfg.targets();
    let a = tight_parameter(&targets, cfg.n);
    let frames = TightFrameSet::new(cfg.n, cfg.l, a)?;
    let norms = ColumnNormSet::new(cfg.n, targets.clone())?;
    let s0 = initial_prescribed_norm_frame(cfg.n, &targets, cfg.seed)?;

    let run = cfg
        .run
        .clone()
        .with_metric(Metric::new("min_col_norm", |d, _| {
            (0..d.cols())
                .map(|j| d.column_norm(j))
                .fold(f64::INFINITY, f64::min)
        }))
        .with_metric(Metric::new("sigma_min_s", |_, s| sigma_min(s)));
    let trace = run_alternating_projections(&frames, &norms, &s0, &run)?;

    let d = trace.final_x.clone();
    Ok(FrameDesignResult {
        coherence: mutual_coherence(&d)?,
        tightness_residual: tightness_residual(&d, a),
        gap: trace.gap(),
        s_or_h: trace.final_y.clone(),
        d,
        trace,
        certificate: None,
    })
}

/// Lower bounds on column norms of `D_k` and on `σ_min(S_k)` at every recorded
/// iteration of a prescribed-norm run, read from the `min_col_norm` and
/// `sigma_min_s` trace columns.
pub fn prop1_guards_from_trace(trace: &IterateTrace, targets: &ColumnNormTargets) -> GuardStatus {
    let (Some(col), Some(sig)) = (
        trace.extra_index("min_col_norm"),
        trace.extra_index("sigma_min_s"),
    ) else {
        return GuardStatus::NotApplicable {
            reason: "trace lacks the min_col_norm and sigma_min_s columns".into(),
        };
    };
    let col_bound = targets.min() / targets.sum().sqrt();
    let sigma_bound = targets.min().sqrt();
    for r in &trace.records {
        if r.extras[col] < col_bound - GUARD_SLACK {
            return GuardStatus::Violated {
                k: r.k,
                guard: "smallest column norm of D_k".into(),
                value: r.extras[col],
                bound: col_bound,
            };
        }
        if r.extras[sig] < sigma_bound - GUARD_SLACK {
            return GuardStatus::Violated {
                k: r.k,
                guard: "smallest singular value of S_k".into(),
                value: r.extras[sig],
                bound: sigma_bound,
            };
        }
    }
    GuardStatus::Holds
}

/// Unit-norm tight frame with coherence pushed towards the Welch bound.
pub fn design_etf(cfg: &FrameDesignConfig) -> Result<FrameDesignResult> {
    cfg.validate()?;
    if cfg
        .c
        .as_ref()
        .is_some_and(|c| c.as_slice().iter().any(|v| *v != 1.0))
    {
        return invalid("ETF design uses unit column norms");
    }
    let (n, l) = (cfg.n, cfg.l);
    let a = l as f64 / n as f64;
    let xi = welch_bound(n, l)?;
    let grams = GramTightSet::new(l, n, a)?;
    let bounded = GramCoherenceSet::new(l, xi)?;
    let (_, h0) = initial_etf_pair(n, l, cfg.seed)?;

    let mut run = cfg.run.clone();
    if n < l {
        run = run.with_metric(Metric::new("eigen_gap", move |_, h| {
            eigen_gap(h, n).unwrap_or(f64::NAN)
        }));
    }
    let trace = run_alternating_projections(&grams, &bounded, &h0, &run)?;

    let certificate = trace
        .records
        .iter()
        .find_map(|r| match etf_certificate(r.f, n, l) {
            EtfInitialization::Certified { nu, threshold } => Some(EtfCertificate {
                k: r.k,
                nu,
                threshold,
            }),
            EtfInitialization::NotCertified { .. } => None,
        });
    let d = extract_frame_from_gram(&trace.final_x, n, a)?;
    let mut unit = d.as_matrix().clone();
    for mut col in unit.column_iter_mut() {
        col.normalize_mut();
    }
    Ok(FrameDesignResult {
        coherence: mutual_coherence(&DenseMatrix::new(unit)?)?,
        tightness_residual: tightness_residual(&d, a),
        gap: trace.gap(),
        s_or_h: trace.final_y.clone(),
        d,
        trace,
        certificate,
    })
}
