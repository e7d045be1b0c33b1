//! The alternating projection loop.
//!
//! Starting from `y₀ ∈ 𝒴`, each iteration computes `x_{k+1} = P_𝒳(y_k)` and
//! `y_{k+1} = P_𝒴(x_{k+1})`, and stops once `‖x_{k+1} − y_{k+1}‖_F ≤ tol` or
//! after `max_iter` iterations. An optional stagnation rule stops runs on
//! non-intersecting sets where the gap never reaches `tol`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::numerics::DenseMatrix;
use crate::projections::{Projector, FEASIBILITY_TOL};

type MetricFn = dyn Fn(&DenseMatrix, &DenseMatrix) -> f64 + Send + Sync;

/// Scalar functional of the current pair `(x_k, y_k)`, recorded per step.
#[derive(Clone)]
pub struct Metric {
    pub name: String,
    eval: Arc<MetricFn>,
}

impl Metric {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&DenseMatrix, &DenseMatrix) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn evaluate(&self, x: &DenseMatrix, y: &DenseMatrix) -> f64 {
        (self.eval)(x, y)
    }
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metric")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// Stop once `dy ≤ tol` for `window` consecutive iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stagnation {
    pub tol: f64,
    pub window: usize,
}

impl Stagnation {
    pub fn new(tol: f64) -> Self {
        Self { tol, window: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub max_iter: usize,
    /// Stop when `‖x_k − y_k‖_F ≤ tol`.
    pub tol: f64,
    /// Record every `record_every`-th iteration (the first and last are always recorded).
    pub record_every: usize,
    pub stagnation: Option<Stagnation>,
    /// Keep every iterate pair (memory grows with the iteration count).
    pub keep_iterates: bool,
    pub extra_metrics: Vec<Metric>,
}

impl RunConfig {
    pub fn new(max_iter: usize, tol: f64) -> Self {
        Self {
            max_iter,
            tol,
            record_every: 1,
            stagnation: None,
            keep_iterates: false,
            extra_metrics: Vec::new(),
        }
    }

    pub fn with_stagnation(mut self, tol: f64) -> Self {
        self.stagnation = Some(Stagnation::new(tol));
        self
    }

    pub fn with_iterates(mut self) -> Self {
        self.keep_iterates = true;
        self
    }

    pub fn with_record_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.extra_metrics.push(metric);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return invalid("max_iter must be at least 1");
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return invalid(format!("tol must be positive, got {}", self.tol));
        }
        if self.record_every == 0 {
            return invalid("record_every must be at least 1");
        }
        if let Some(s) = self.stagnation {
            if !(s.tol >= 0.0 && s.tol.is_finite()) || s.window == 0 {
                return invalid("stagnation rule needs a finite tol ≥ 0 and a positive window");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIter,
    Stagnation,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIter => "max_iter",
            StopReason::Stagnation => "stagnation",
        }
    }
}

/// Per-iteration scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// `‖x_k − y_k‖_F²`
    pub f: f64,
    /// `‖x_k − x_{k−1}‖_F`; undefined at `k = 1` since there is no `x₀`.
    pub dx: Option<f64>,
    /// `‖y_k − y_{k−1}‖_F`
    pub dy: f64,
    /// Norm of the subgradient `(0, 2(y_{k−1} − y_k))`, i.e. `2·dy`.
    pub residual: f64,
    pub extras: Vec<f64>,
}

impl TraceRecord {
    pub fn new(k: usize, f: f64, dx: Option<f64>, dy: f64, extras: Vec<f64>) -> Self {
        Self {
            k,
            f,
            dx,
            dy,
            residual: 2.0 * dy,
            extras,
        }
    }
}

/// Full iterate history: `y0` plus `(x_k, y_k)` for `k = 1, 2, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateHistory {
    pub y0: DenseMatrix,
    pub xs: Vec<DenseMatrix>,
    pub ys: Vec<DenseMatrix>,
}

impl IterateHistory {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// `y_k` for `k ≥ 0`.
    pub fn y(&self, k: usize) -> &DenseMatrix {
        if k == 0 {
            &self.y0
        } else {
            &self.ys[k - 1]
        }
    }

    /// `x_k` for `k ≥ 1`.
    pub fn x(&self, k: usize) -> &DenseMatrix {
        &self.xs[k - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
    pub extra_names: Vec<String>,
    pub final_x: DenseMatrix,
    pub final_y: DenseMatrix,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub history: Option<IterateHistory>,
}

impl IterateTrace {
    /// `‖x − y‖_F` at the final pair.
    pub fn gap(&self) -> f64 {
        self.final_x.distance(&self.final_y)
    }

    /// Index of a named extra metric column.
    pub fn extra_index(&self, name: &str) -> Option<usize> {
        self.extra_names.iter().position(|n| n == name)
    }
}

/// Runs alternating projections from `y0 ∈ 𝒴`.
pub fn run_alternating_projections(
    px: &dyn Projector,
    py: &dyn Projector,
    y0: &DenseMatrix,
    cfg: &RunConfig,
) -> Result<IterateTrace> {
    cfg.validate()?;
    if px.shape() != py.shape() {
        return invalid(format!(
            "projectors disagree on shape: {} is {:?}, {} is {:?}",
            px.name(),
            px.shape(),
            py.name(),
            py.shape()
        ));
    }
    if y0.shape() != py.shape() {
        return invalid(format!(
            "y0 is {:?} but the sets live in {:?}",
            y0.shape(),
            py.shape()
        ));
    }
    if !y0.is_finite() {
        return invalid("y0 contains non-finite entries");
    }
    if !py.contains(y0, FEASIBILITY_TOL) {
        return invalid(format!("y0 is not a member of {}", py.name()));
    }

    let extra_names = cfg.extra_metrics.iter().map(|m| m.name.clone()).collect();
    let mut history = cfg.keep_iterates.then(|| IterateHistory {
        y0: y0.clone(),
        xs: Vec::new(),
        ys: Vec::new(),
    });
    let mut records = Vec::new();
    let mut x_prev: Option<DenseMatrix> = None;
    let mut y_prev = y0.clone();
    let mut quiet_steps = 0usize;

    for k in 1..=cfg.max_iter {
        let x = px.project(&y_prev)?;
        if !x.is_finite() {
            return Err(numerical_failure(k, px.name()));
        }
        let y = py.project(&x)?;
        if !y.is_finite() {
            return Err(numerical_failure(k, py.name()));
        }

        let gap = x.distance(&y);
        let dx = x_prev.as_ref().map(|xp| x.distance(xp));
        let dy = y.distance(&y_prev);

        let stop = if gap <= cfg.tol {
            Some(StopReason::Tolerance)
        } else if stagnated(cfg.stagnation, dy, &mut quiet_steps) {
            Some(StopReason::Stagnation)
        } else if k == cfg.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        };

        if stop.is_some() || (k - 1) % cfg.record_every == 0 {
            let extras = cfg
                .extra_metrics
                .iter()
                .map(|m| m.evaluate(&x, &y))
                .collect();
            records.push(TraceRecord::new(k, gap * gap, dx, dy, extras));
        }
        if let Some(h) = history.as_mut() {
            h.xs.push(x.clone());
            h.ys.push(y.clone());
        }

        if let Some(stop_reason) = stop {
            return Ok(IterateTrace {
                records,
                extra_names,
                final_x: x,
                final_y: y,
                stop_reason,
                iterations: k,
                history,
            });
        }
        x_prev = Some(x);
        y_prev = y;
    }
    unreachable!("loop always stops at max_iter")
}

fn stagnated(rule: Option<Stagnation>, dy: f64, quiet_steps: &mut usize) -> bool {
    let Some(rule) = rule else { return false };
    if dy <= rule.tol {
        *quiet_steps += 1;
    } else {
        *quiet_steps = 0;
    }
    *quiet_steps >= rule.window
}

fn numerical_failure(iteration: usize, set: &str) -> Error {
    Error::NumericalFailure {
        iteration,
        detail: format!("projection onto {set} produced a non-finite iterate"),
    }
}

/// Independent runs from several starting points, in parallel. Results keep
/// the order of `starts`; one failing start does not affect the others.
pub fn multi_start(
    px: &dyn Projector,
    py: &dyn Projector,
    starts: &[DenseMatrix],
    cfg: &RunConfig,
) -> Vec<Result<IterateTrace>> {
    starts
        .par_iter()
        .map(|y0| run_alternating_projections(px, py, y0, cfg))
        .collect()
}
