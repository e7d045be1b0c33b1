//! Convergence certificates computed from an iterate trace.
//!
//! * sufficient decrease: the largest `α` with `f_{k−1} − f_k ≥ α·dy_k²`;
//! * local contraction: the smallest `β` with `dx_{k+1} ≤ β·dy_k` once `dy_k ≤ ε`;
//! * KL exponent: a fitted decay model for the distance to the limit,
//!   classified as finite (`θ = 0`), linear (`θ ∈ (0, ½]`) or sublinear
//!   (`θ ∈ (½, 1)`, distance `~ k^{−(1−θ)/(2θ−1)}`).
//!
//! Ratios whose denominator is a step shorter than [`RESOLUTION`] times the
//! longest step of the trace are skipped: at that scale the numerator is
//! dominated by rounding in the iterates.

use serde::Serialize;

use crate::engine::{IterateHistory, TraceRecord};
use crate::error::{invalid, Error, Result};
use crate::numerics::svd;
use crate::projections::ColumnNormTargets;

/// Steps shorter than this fraction of the longest step are below working precision.
pub const RESOLUTION: f64 = 1e-6;

/// Slack applied when comparing guard inequalities.
pub const GUARD_SLACK: f64 = 1e-9;

/// Minimum number of fitted samples for a KL-exponent estimate.
pub const MIN_TAIL: usize = 30;

fn step_floor(records: &[TraceRecord]) -> f64 {
    RESOLUTION * records.iter().map(|r| r.dy).fold(0.0, f64::max)
}

/// Index pairs `(i, i+1)` of records at consecutive iterations.
fn consecutive(records: &[TraceRecord]) -> impl Iterator<Item = (&TraceRecord, &TraceRecord)> {
    records
        .windows(2)
        .filter(|w| w[1].k == w[0].k + 1)
        .map(|w| (&w[0], &w[1]))
}

/// Largest `α` with `f_{k−1} − f_k ≥ α·dy_k²` over the trace.
pub fn check_sufficient_decrease(records: &[TraceRecord]) -> Result<f64> {
    sufficient_decrease_from(records, 0, step_floor(records))
}

fn sufficient_decrease_from(records: &[TraceRecord], start: usize, floor: f64) -> Result<f64> {
    let tail = &records[start.saturating_sub(1)..];
    if tail.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two consecutive records".into(),
        ));
    }
    if tail.iter().skip(1).all(|r| r.dy == 0.0) {
        return Err(Error::Degenerate(
            "every step is zero; the trace is already converged".into(),
        ));
    }
    consecutive(tail)
        .filter(|(_, cur)| cur.dy > 0.0 && cur.dy >= floor)
        .map(|(prev, cur)| (prev.f - cur.f) / (cur.dy * cur.dy))
        .reduce(f64::min)
        .ok_or_else(|| Error::InsufficientData("no consecutive steps with a resolvable dy".into()))
}

/// Result of [`estimate_contraction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contraction {
    pub beta: f64,
    pub epsilon: f64,
    pub steps: usize,
}

/// 90th percentile (nearest rank) of the positive `dy` values.
pub fn default_epsilon(records: &[TraceRecord]) -> Option<f64> {
    let mut dys: Vec<f64> = records.iter().map(|r| r.dy).filter(|d| *d > 0.0).collect();
    if dys.is_empty() {
        return None;
    }
    dys.sort_by(f64::total_cmp);
    let rank = ((0.9 * dys.len() as f64).ceil() as usize).max(1);
    Some(dys[rank - 1])
}

/// Smallest `β` with `dx_{k+1} ≤ β·dy_k` over steps with `0 < dy_k ≤ ε`.
/// `epsilon = None` uses [`default_epsilon`].
pub fn estimate_contraction(records: &[TraceRecord], epsilon: Option<f64>) -> Result<Contraction> {
    contraction_from(records, epsilon, step_floor(records))
}

fn contraction_from(
    records: &[TraceRecord],
    epsilon: Option<f64>,
    floor: f64,
) -> Result<Contraction> {
    let epsilon = match epsilon {
        Some(e) if e > 0.0 => e,
        Some(e) => return invalid(format!("epsilon must be positive, got {e}")),
        None => default_epsilon(records)
            .ok_or_else(|| Error::InsufficientData("no nonzero steps in the trace".into()))?,
    };
    let ratios: Vec<f64> = consecutive(records)
        .filter(|(prev, _)| prev.dy > 0.0 && prev.dy <= epsilon && prev.dy >= floor)
        .filter_map(|(prev, cur)| cur.dx.map(|dx| dx / prev.dy))
        .collect();
    if ratios.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no qualifying steps with 0 < dy ≤ {epsilon:e}"
        )));
    }
    Ok(Contraction {
        beta: ratios.iter().copied().fold(0.0, f64::max),
        epsilon,
        steps: ratios.len(),
    })
}

/// Sampled versions of the three-point and local-contraction assumptions on the
/// tail of a trace, which starts at the first step with `dy ≤ ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionCertificate {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub epsilon_used: f64,
    pub tail_start: usize,
    pub pass: bool,
}

pub fn certify_assumptions(
    records: &[TraceRecord],
    epsilon: Option<f64>,
) -> Result<AssumptionCertificate> {
    let floor = step_floor(records);
    let epsilon = match epsilon {
        Some(e) => e,
        None => default_epsilon(records).ok_or_else(|| {
            Error::Degenerate("every step is zero; the trace is already converged".into())
        })?,
    };
    let start = records
        .iter()
        .position(|r| r.dy > 0.0 && r.dy <= epsilon)
        .ok_or_else(|| Error::InsufficientData(format!("no step with 0 < dy ≤ {epsilon:e}")))?;
    let alpha_hat = sufficient_decrease_from(records, start, floor)?;
    let contraction = contraction_from(&records[start..], Some(epsilon), floor)?;
    Ok(AssumptionCertificate {
        alpha_hat,
        beta_hat: contraction.beta,
        epsilon_used: epsilon,
        tail_start: records[start].k,
        pass: alpha_hat > 0.0 && contraction.beta.is_finite(),
    })
}

// ---------------------------------------------------------------------------
// KL exponent

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateClass {
    Finite,
    Linear,
    Sublinear,
}

impl RateClass {
    /// Rate class implied by a KL exponent.
    pub fn from_theta(theta: f64) -> Self {
        if theta == 0.0 {
            RateClass::Finite
        } else if theta <= 0.5 {
            RateClass::Linear
        } else {
            RateClass::Sublinear
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlEstimate {
    pub theta_hat: f64,
    pub rate_class: RateClass,
    /// Per-iteration contraction factor of the distance, for the linear class.
    pub rho_hat: Option<f64>,
    /// Decay power `p` of `k^{−p}`, for the sublinear class.
    pub power_hat: Option<f64>,
    pub fit_r2: f64,
    pub samples: usize,
}

impl KlEstimate {
    fn finite(samples: usize) -> Self {
        Self {
            theta_hat: 0.0,
            rate_class: RateClass::Finite,
            rho_hat: None,
            power_hat: None,
            fit_r2: 1.0,
            samples,
        }
    }
}

/// KL exponent implied by a sublinear decay `k^{−p}`: inverts `p = (1−θ)/(2θ−1)`.
pub fn theta_from_power(p: f64) -> f64 {
    (1.0 + p) / (1.0 + 2.0 * p)
}

/// Estimates the KL exponent from an engine trace.
///
/// A trace that ends exactly in the intersection (`f = 0`) or whose steps
/// become exactly zero is classified finite.
///
/// The distance to the limit is bounded by the tail sum `Q_k = Σ_{i>k} dy_i`.
/// The decay models are fitted to the increments `dy_k = Q_{k−1} − Q_k`, which
/// share the geometric ratio of `Q_k` and whose power is one higher, and which
/// are not biased by the finite length of the trace.
pub fn estimate_kl_exponent(records: &[TraceRecord]) -> Result<KlEstimate> {
    if records.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let last_moving = records.iter().rposition(|r| r.dy > 0.0);
    let hit = records.last().is_some_and(|r| r.f == 0.0);
    if hit || last_moving.is_none_or(|i| i + 1 < records.len()) {
        return Ok(KlEstimate::finite(records.len()));
    }
    let samples: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.dy > 0.0)
        .map(|r| (r.k as f64, r.dy))
        .collect();
    classify(&samples, 1.0)
}

/// Estimates the KL exponent from a sequence `(k, e_k)` of distances to the limit.
/// A sequence that reaches exactly zero and stays there is classified finite.
pub fn estimate_kl_exponent_from_errors(errors: &[(f64, f64)]) -> Result<KlEstimate> {
    if errors
        .iter()
        .any(|(k, e)| !(k.is_finite() && *k > 0.0 && e.is_finite() && *e >= 0.0))
    {
        return invalid("errors must be finite, nonnegative, with positive indices");
    }
    if let Some(first_zero) = errors.iter().position(|(_, e)| *e == 0.0) {
        if errors[first_zero..].iter().all(|(_, e)| *e == 0.0) {
            return Ok(KlEstimate::finite(errors.len()));
        }
        return invalid("error sequence returns to nonzero values after reaching zero");
    }
    classify(errors, 0.0)
}

/// Fits linear (`ln v` vs `k`) and power (`ln v` vs `ln k`) models to the
/// samples after dropping the leading tenth, and keeps the better fit.
/// `power_shift` is subtracted from the fitted power (1 for increments).
fn classify(samples: &[(f64, f64)], power_shift: f64) -> Result<KlEstimate> {
    let tail = &samples[samples.len() / 10..];
    if tail.len() < MIN_TAIL {
        return Err(Error::InsufficientData(format!(
            "{} samples in the tail, need at least {MIN_TAIL}",
            tail.len()
        )));
    }
    let ln_v: Vec<f64> = tail.iter().map(|(_, v)| v.ln()).collect();
    let ks: Vec<f64> = tail.iter().map(|(k, _)| *k).collect();
    let ln_k: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let linear = least_squares(&ks, &ln_v);
    let power = least_squares(&ln_k, &ln_v);

    if linear.r2 >= power.r2 {
        if linear.slope >= 0.0 {
            return Err(Error::Degenerate("fitted sequence does not decay".into()));
        }
        Ok(KlEstimate {
            theta_hat: 0.5,
            rate_class: RateClass::Linear,
            rho_hat: Some(linear.slope.exp()),
            power_hat: None,
            fit_r2: linear.r2,
            samples: tail.len(),
        })
    } else {
        let p = -power.slope - power_shift;
        if p <= 0.0 {
            return Err(Error::Degenerate(format!(
                "fitted decay power {p} is not positive"
            )));
        }
        Ok(KlEstimate {
            theta_hat: theta_from_power(p),
            rate_class: RateClass::Sublinear,
            rho_hat: None,
            power_hat: Some(p),
            fit_r2: power.r2,
            samples: tail.len(),
        })
    }
}

struct Fit {
    slope: f64,
    r2: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> Fit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Fit { slope, r2 }
}

// ---------------------------------------------------------------------------
// Certificates that need the full iterate history

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreePointCheck {
    pub holds: bool,
    /// `min_k [g(x_k, y_{k−1}) − g(x_k, y_k) − α‖y_k − y_{k−1}‖²]`
    pub margin: f64,
}

/// Checks `g(x_k, y_{k−1}) − g(x_k, y_k) ≥ α‖y_k − y_{k−1}‖²` at every `k`, with
/// `g(x, y) = ‖x − y‖_F²`. Holds when the margin is at least `−GUARD_SLACK`.
pub fn check_three_point(history: &IterateHistory, alpha: f64) -> Result<ThreePointCheck> {
    if history.is_empty() {
        return Err(Error::InsufficientData(
            "trace did not record iterates".into(),
        ));
    }
    let margin = (1..=history.len())
        .map(|k| {
            let (x, y, y_prev) = (history.x(k), history.y(k), history.y(k - 1));
            x.distance(y_prev).powi(2) - x.distance(y).powi(2) - alpha * y.distance(y_prev).powi(2)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(ThreePointCheck {
        holds: margin >= -GUARD_SLACK,
        margin,
    })
}

/// Three-point constant for the prescribed-column-norm set: `c_min / (c_max·√Σc)`.
pub fn three_point_constant(targets: &ColumnNormTargets) -> f64 {
    targets.min() / (targets.max() * targets.sum().sqrt())
}

/// Three-point inequality for a prescribed-norm run, with [`three_point_constant`].
pub fn check_three_point_frames(
    history: &IterateHistory,
    targets: &ColumnNormTargets,
) -> Result<ThreePointCheck> {
    check_three_point(history, three_point_constant(targets))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum GuardStatus {
    Holds,
    Violated {
        k: usize,
        guard: String,
        value: f64,
        bound: f64,
    },
    NotApplicable {
        reason: String,
    },
}

impl GuardStatus {
    pub fn holds(&self) -> bool {
        matches!(self, GuardStatus::Holds)
    }
}

/// Lower bounds along a prescribed-norm run started from a full-rank `S₀`:
/// every column of `D_k` has norm at least `c_min/√Σc` and `σ_min(S_k) ≥ √c_min`,
/// for `k ≥ 1`.
pub fn check_prop1_guards(
    history: &IterateHistory,
    targets: &ColumnNormTargets,
) -> Result<GuardStatus> {
    if history.is_empty() {
        return Err(Error::InsufficientData(
            "trace did not record iterates".into(),
        ));
    }
    let s0 = &history.y0;
    if s0.cols() != targets.len() {
        return invalid("targets do not match the frame size");
    }
    let s0_svd = svd(s0)?;
    let smax = s0_svd.singulars[0];
    let smin = *s0_svd.singulars.last().expect("non-empty");
    let zero_col = (0..s0.cols()).any(|j| s0.column_norm(j) == 0.0);
    if zero_col || smin <= 1e-12 * smax.max(f64::MIN_POSITIVE) {
        return Ok(GuardStatus::NotApplicable {
            reason: "initial S₀ is rank deficient or has a zero column".into(),
        });
    }

    let col_bound = targets.min() / targets.sum().sqrt();
    let sigma_bound = targets.min().sqrt();
    for k in 1..=history.len() {
        let d = history.x(k);
        if let Some((j, norm)) = (0..d.cols())
            .map(|j| (j, d.column_norm(j)))
            .find(|(_, n)| *n < col_bound - GUARD_SLACK)
        {
            return Ok(GuardStatus::Violated {
                k,
                guard: format!("column {j} norm of D_k"),
                value: norm,
                bound: col_bound,
            });
        }
        let sigma = *svd(history.y(k))?.singulars.last().expect("non-empty");
        if sigma < sigma_bound - GUARD_SLACK {
            return Ok(GuardStatus::Violated {
                k,
                guard: "smallest singular value of S_k".into(),
                value: sigma,
                bound: sigma_bound,
            });
        }
    }
    Ok(GuardStatus::Holds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    pub worst_ratio: f64,
    pub bound: f64,
}

/// Checks `dx_{k+1} ≤ bound·dy_k` at every resolvable consecutive step.
pub fn check_contraction_bound(records: &[TraceRecord], bound: f64) -> Result<BoundCheck> {
    let floor = step_floor(records);
    let worst = consecutive(records)
        .filter(|(prev, _)| prev.dy > 0.0 && prev.dy >= floor)
        .filter_map(|(prev, cur)| cur.dx.map(|dx| dx / prev.dy))
        .reduce(f64::max)
        .ok_or_else(|| Error::InsufficientData("no resolvable consecutive steps".into()))?;
    Ok(BoundCheck {
        holds: worst <= bound,
        worst_ratio: worst,
        bound,
    })
}

/// Contraction constant for the tight-frame projection along a prescribed-norm
/// run: `Σc / (N·√c_min)`.
pub fn column_norm_contraction_constant(targets: &ColumnNormTargets, n: usize) -> f64 {
    targets.sum() / (n as f64 * targets.min().sqrt())
}

// ---------------------------------------------------------------------------
// Report

/// Outcome of one diagnostic: a value, or an explicit reason for abstaining.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Finding<T> {
    Ok { value: T },
    InsufficientData { reason: String },
    Degenerate { reason: String },
    Invalid { reason: String },
}

impl<T> Finding<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Finding::Ok { value } => Some(value),
            _ => None,
        }
    }
}

impl<T> From<Result<T>> for Finding<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(value) => Finding::Ok { value },
            Err(Error::InsufficientData(reason)) => Finding::InsufficientData { reason },
            Err(Error::Degenerate(reason)) => Finding::Degenerate { reason },
            Err(e) => Finding::Invalid {
                reason: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub records: usize,
    pub sufficient_decrease: Finding<f64>,
    pub contraction: Finding<Contraction>,
    pub certificate: Finding<AssumptionCertificate>,
    pub kl: Finding<KlEstimate>,
}

/// Runs every trace-level diagnostic.
pub fn analyze(records: &[TraceRecord]) -> DiagnosticsReport {
    DiagnosticsReport {
        records: records.len(),
        sufficient_decrease: check_sufficient_decrease(records).into(),
        contraction: estimate_contraction(records, None).into(),
        certificate: certify_assumptions(records, None).into(),
        kl: estimate_kl_exponent(records).into(),
    }
}
