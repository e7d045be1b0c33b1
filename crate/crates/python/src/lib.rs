//! Python bindings. Matrices cross the boundary as lists of rows.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use altproj::diagnostics::{self, KlEstimate};
use altproj::engine::{self, IterateTrace, RunConfig};
use altproj::frames::{self, FrameDesignConfig, FrameDesignResult};
use altproj::numerics::{self, DenseMatrix};
use altproj::projections::{self as proj, ColumnNormTargets};
use altproj::Error;

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(msg) => PyValueError::new_err(msg),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(py_err)
}

fn run_config(
    max_iter: usize,
    tol: f64,
    stagnation_tol: Option<f64>,
    record_every: usize,
) -> RunConfig {
    let mut run = RunConfig::new(max_iter, tol).with_record_every(record_every);
    if let Some(s) = stagnation_tol {
        run = run.with_stagnation(s);
    }
    run
}

/// A closed set with its projection.
#[pyclass(name = "Projector", frozen)]
struct PyProjector {
    inner: Arc<dyn proj::Projector>,
}

fn wrap(p: impl proj::Projector + 'static) -> PyProjector {
    PyProjector { inner: Arc::new(p) }
}

#[pymethods]
impl PyProjector {
    #[staticmethod]
    fn r#box(lower: Rows, upper: Rows) -> PyResult<Self> {
        Ok(wrap(
            proj::BoxSet::new(matrix(&lower)?, matrix(&upper)?).map_err(py_err)?,
        ))
    }

    #[staticmethod]
    fn oriented_box(frame: Rows, lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        Ok(wrap(
            proj::OrientedBox::new(matrix(&frame)?, lower, upper).map_err(py_err)?,
        ))
    }

    #[staticmethod]
    fn halfspace(normal: Rows, offset: f64) -> PyResult<Self> {
        Ok(wrap(
            proj::HalfSpace::new(matrix(&normal)?, offset).map_err(py_err)?,
        ))
    }

    #[staticmethod]
    fn affine(basis: Rows, point: Rows) -> PyResult<Self> {
        Ok(wrap(
            proj::AffineSet::new(matrix(&basis)?, matrix(&point)?).map_err(py_err)?,
        ))
    }

    /// Line in the plane at `angle_rad`, shifted by `offset` along its normal.
    #[staticmethod]
    fn line(angle_rad: f64, offset: f64) -> PyResult<Self> {
        Ok(wrap(
            proj::AffineSet::line_2d(angle_rad, offset).map_err(py_err)?,
        ))
    }

    #[staticmethod]
    fn column_norms(rows: usize, targets: Vec<f64>) -> PyResult<Self> {
        let targets = ColumnNormTargets::new(targets).map_err(py_err)?;
        Ok(wrap(
            proj::ColumnNormSet::new(rows, targets).map_err(py_err)?,
        ))
    }

    #[staticmethod]
    fn tight_frame(rows: usize, cols: usize, a: f64) -> PyResult<Self> {
        Ok(wrap(
            proj::TightFrameSet::new(rows, cols, a).map_err(py_err)?,
        ))
    }

    #[staticmethod]
    fn gram_tight(l: usize, n: usize, a: f64) -> PyResult<Self> {
        Ok(wrap(proj::GramTightSet::new(l, n, a).map_err(py_err)?))
    }

    #[staticmethod]
    fn gram_coherence(l: usize, xi: f64) -> PyResult<Self> {
        Ok(wrap(proj::GramCoherenceSet::new(l, xi).map_err(py_err)?))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn project(&self, z: Rows) -> PyResult<Rows> {
        Ok(self.inner.project(&matrix(&z)?).map_err(py_err)?.to_rows())
    }

    #[pyo3(signature = (z, tol = 1e-8))]
    fn contains(&self, z: Rows, tol: f64) -> PyResult<bool> {
        Ok(self.inner.contains(&matrix(&z)?, tol))
    }

    fn __repr__(&self) -> String {
        let (r, c) = self.inner.shape();
        format!("Projector({}, {r}x{c})", self.inner.name())
    }
}

fn trace_dict<'py>(py: Python<'py>, trace: &IterateTrace) -> PyResult<Bound<'py, PyDict>> {
    let records = trace
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("k", r.k)?;
            d.set_item("f", r.f)?;
            d.set_item("dx", r.dx)?;
            d.set_item("dy", r.dy)?;
            d.set_item("residual", r.residual)?;
            for (name, v) in trace.extra_names.iter().zip(&r.extras) {
                d.set_item(name, v)?;
            }
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("records", records)?;
    out.set_item("final_x", trace.final_x.to_rows())?;
    out.set_item("final_y", trace.final_y.to_rows())?;
    out.set_item("stop_reason", trace.stop_reason.as_str())?;
    out.set_item("iterations", trace.iterations)?;
    out.set_item("gap", trace.gap())?;
    Ok(out)
}

fn design_dict<'py>(py: Python<'py>, res: &FrameDesignResult) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("d", res.d.to_rows())?;
    out.set_item("s_or_h", res.s_or_h.to_rows())?;
    out.set_item("coherence", res.coherence)?;
    out.set_item("tightness_residual", res.tightness_residual)?;
    out.set_item("gap", res.gap)?;
    out.set_item("certified_at", res.certificate.map(|c| c.k))?;
    out.set_item("trace", trace_dict(py, &res.trace)?)?;
    Ok(out)
}

fn kl_dict<'py>(py: Python<'py>, est: &KlEstimate) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("theta_hat", est.theta_hat)?;
    out.set_item("rate_class", format!("{:?}", est.rate_class).to_lowercase())?;
    out.set_item("rho_hat", est.rho_hat)?;
    out.set_item("power_hat", est.power_hat)?;
    out.set_item("fit_r2", est.fit_r2)?;
    Ok(out)
}

/// Thin SVD: returns `(u, singular_values, v)`.
#[pyfunction]
fn svd(m: Rows) -> PyResult<(Rows, Vec<f64>, Rows)> {
    let r = numerics::svd(&matrix(&m)?).map_err(py_err)?;
    Ok((r.u.to_rows(), r.singulars, r.v.to_rows()))
}

/// Symmetric eigendecomposition: `(eigenvalues descending, eigenvectors as columns)`.
#[pyfunction]
fn sym_eig(m: Rows) -> PyResult<(Vec<f64>, Rows)> {
    let r = numerics::sym_eig_desc(&matrix(&m)?).map_err(py_err)?;
    Ok((r.eigvals, r.eigvecs.to_rows()))
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (px, py_set, y0, max_iter, tol, stagnation_tol = None, record_every = 1))]
fn run_alternating_projections<'py>(
    py: Python<'py>,
    px: &PyProjector,
    py_set: &PyProjector,
    y0: Rows,
    max_iter: usize,
    tol: f64,
    stagnation_tol: Option<f64>,
    record_every: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = run_config(max_iter, tol, stagnation_tol, record_every);
    let trace = engine::run_alternating_projections(
        px.inner.as_ref(),
        py_set.inner.as_ref(),
        &matrix(&y0)?,
        &cfg,
    )
    .map_err(py_err)?;
    trace_dict(py, &trace)
}

#[pyfunction]
fn welch_bound(n: usize, l: usize) -> PyResult<f64> {
    frames::welch_bound(n, l).map_err(py_err)
}

#[pyfunction]
fn mutual_coherence(d: Rows) -> PyResult<f64> {
    frames::mutual_coherence(&matrix(&d)?).map_err(py_err)
}

#[pyfunction]
fn tightness_residual(d: Rows, a: f64) -> PyResult<f64> {
    Ok(frames::tightness_residual(&matrix(&d)?, a))
}

#[pyfunction]
fn eigen_gap(h: Rows, n: usize) -> PyResult<f64> {
    frames::eigen_gap(&matrix(&h)?, n).map_err(py_err)
}

#[pyfunction]
fn extract_frame_from_gram(g: Rows, n: usize, a: f64) -> PyResult<Rows> {
    Ok(frames::extract_frame_from_gram(&matrix(&g)?, n, a)
        .map_err(py_err)?
        .to_rows())
}

#[pyfunction]
#[pyo3(signature = (n, l, seed, max_iter = 10_000, tol = 1e-7, c = None))]
fn design_prescribed_norm_frame<'py>(
    py: Python<'py>,
    n: usize,
    l: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    c: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = FrameDesignConfig::new(n, l, seed, RunConfig::new(max_iter, tol));
    if let Some(c) = c {
        cfg = cfg.with_targets(ColumnNormTargets::new(c).map_err(py_err)?);
    }
    let res = frames::design_prescribed_norm_frame(&cfg).map_err(py_err)?;
    design_dict(py, &res)
}

#[pyfunction]
#[pyo3(signature = (n, l, seed, max_iter = 5000, tol = 1e-10))]
fn design_etf<'py>(
    py: Python<'py>,
    n: usize,
    l: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let res = frames::design_etf(&FrameDesignConfig::new(
        n,
        l,
        seed,
        RunConfig::new(max_iter, tol),
    ))
    .map_err(py_err)?;
    design_dict(py, &res)
}

/// KL-exponent estimate from `(k, distance)` pairs.
#[pyfunction]
fn estimate_kl_exponent<'py>(
    py: Python<'py>,
    errors: Vec<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let est = diagnostics::estimate_kl_exponent_from_errors(&errors).map_err(py_err)?;
    kl_dict(py, &est)
}

#[pymodule]
#[pyo3(name = "altproj")]
fn altproj_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProjector>()?;
    m.add_function(wrap_pyfunction!(svd, m)?)?;
    m.add_function(wrap_pyfunction!(sym_eig, m)?)?;
    m.add_function(wrap_pyfunction!(run_alternating_projections, m)?)?;
    m.add_function(wrap_pyfunction!(welch_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_coherence, m)?)?;
    m.add_function(wrap_pyfunction!(tightness_residual, m)?)?;
    m.add_function(wrap_pyfunction!(eigen_gap, m)?)?;
    m.add_function(wrap_pyfunction!(extract_frame_from_gram, m)?)?;
    m.add_function(wrap_pyfunction!(design_prescribed_norm_frame, m)?)?;
    m.add_function(wrap_pyfunction!(design_etf, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_kl_exponent, m)?)?;
    Ok(())
}
