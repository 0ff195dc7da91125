//! Python bindings for `trimap`.
//!
//! Points and sample sets cross the boundary as lists of floats and lists of
//! rows. Library errors raise `trimap_py.TrimapError` with the message
//! `<code>: <detail>`.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use trimap::bod;
use trimap::conditioning::condition;
use trimap::diagnostics::kl_variance_direct;
use trimap::direct::{build_direct as build_direct_map, DirectBuildConfig, Integration};
use trimap::inverse::{build_inverse as build_inverse_map, InverseBuildConfig};
use trimap::io::{load_map, map_from_str, map_to_string, save_map};
use trimap::map::{ComponentKind, Direction, MapTemplate, TriangularMap};
use trimap::quadrature::{sample_reference, Provenance, SampleSet};
use trimap::solver::{invert_at, push_inverse};
use trimap::target::TargetDensity;

create_exception!(trimap_py, TrimapError, PyException);

fn to_py(e: trimap::TrimapError) -> PyErr {
    TrimapError::new_err(format!("{}: {e}", e.code()))
}

fn template(kind: &str, degree: usize) -> PyResult<MapTemplate> {
    let kind = ComponentKind::parse(kind).map_err(to_py)?;
    Ok(match kind {
        ComponentKind::Rbf(_) => MapTemplate::rbf(degree),
        kind => MapTemplate { kind, ..MapTemplate::total_order(degree) },
    })
}

fn rows(samples: &SampleSet) -> Vec<Vec<f64>> {
    samples.rows().map(<[f64]>::to_vec).collect()
}

/// Log-density and optional gradient given as Python callables. Python
/// exceptions and non-numeric returns surface as callback failures.
struct PyTarget {
    dim: usize,
    log_density: Py<PyAny>,
    gradient: Option<Py<PyAny>>,
}

impl TargetDensity for PyTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        Python::attach(|py| {
            self.log_density
                .bind(py)
                .call1((y.to_vec(),))
                .and_then(|v| v.extract::<f64>())
                .unwrap_or(f64::NAN)
        })
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        let gradient = self.gradient.as_ref()?;
        Some(Python::attach(|py| {
            gradient
                .bind(py)
                .call1((y.to_vec(),))
                .and_then(|v| v.extract::<Vec<f64>>())
                .unwrap_or_else(|_| vec![f64::NAN; y.len()])
        }))
    }
}

/// Monotone lower-triangular transport map.
#[pyclass(name = "Map", module = "trimap_py")]
struct PyMap {
    inner: TriangularMap,
}

#[pymethods]
impl PyMap {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyMap { inner: load_map(path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyMap { inner: map_from_str(text).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_map(&self.inner, path).map_err(to_py)
    }

    fn to_text(&self) -> String {
        map_to_string(&self.inner)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// `"direct"` or `"inverse"`.
    #[getter]
    fn direction(&self) -> &'static str {
        self.inner.direction().as_str()
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&x).map_err(to_py)
    }

    fn evaluate_many(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        points.iter().map(|x| self.inner.evaluate(x).map_err(to_py)).collect()
    }

    fn log_det_jacobian(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_det_jacobian(&x).map_err(to_py)
    }

    /// Solves `map(x) = r` for `x`.
    #[pyo3(signature = (r, tol = 1e-10))]
    fn invert(&self, r: Vec<f64>, tol: f64) -> PyResult<Vec<f64>> {
        invert_at(&self.inner, &r, tol).map_err(to_py)
    }

    /// Samples of the target approximation: direct maps are evaluated at
    /// reference draws, inverse maps are inverted at them.
    #[pyo3(signature = (n, seed, tol = 1e-10))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64, tol: f64) -> PyResult<Vec<Vec<f64>>> {
        let map = &self.inner;
        py.detach(|| {
            let x = sample_reference(n, map.dim(), seed)?;
            match map.direction() {
                Direction::Direct => x.rows().map(|r| map.evaluate(r)).collect(),
                Direction::Inverse => {
                    let batch = push_inverse(map, &x, tol)?;
                    match batch.failures.into_iter().next() {
                        Some((_, e)) => Err(e),
                        None => Ok(rows(&batch.samples)),
                    }
                }
            }
        })
        .map_err(to_py)
    }

    /// Draws from the conditional of the trailing coordinates given the first
    /// `len(y_star)` coordinates.
    #[pyo3(signature = (y_star, n, seed, tol = 1e-10))]
    fn condition_sample(&self, py: Python<'_>, y_star: Vec<f64>, n: usize, seed: u64, tol: f64) -> PyResult<Vec<Vec<f64>>> {
        let map = &self.inner;
        py.detach(|| {
            let cmap = condition(map, y_star.len(), &y_star, tol)?;
            cmap.sample(n, seed).map(|s| rows(&s))
        })
        .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Map(dim={}, direction={}, params={})",
            self.inner.dim(),
            self.inner.direction().as_str(),
            self.inner.num_params()
        )
    }
}

/// Fits a direct map to an unnormalized log-density given as a Python
/// callable, with an optional gradient callable. Without a gradient the fit
/// uses forward differences. Returns the map and the optimization report
/// text.
#[pyfunction]
#[pyo3(signature = (log_density, dim, degree = 2, kind = "total", order = 8, gradient = None))]
fn build_direct(
    py: Python<'_>,
    log_density: Py<PyAny>,
    dim: usize,
    degree: usize,
    kind: &str,
    order: usize,
    gradient: Option<Py<PyAny>>,
) -> PyResult<(PyMap, String)> {
    let config = DirectBuildConfig::new(template(kind, degree)?, Integration::GaussHermite { order });
    let target = PyTarget { dim, log_density, gradient };
    let (map, report) = py.detach(|| build_direct_map(&target, &config)).map_err(to_py)?;
    Ok((PyMap { inner: map }, report.to_text()))
}

/// Fits an inverse map to target samples given as a list of rows.
#[pyfunction]
#[pyo3(signature = (samples, degree = 2, kind = "total", standardize = true))]
fn build_inverse(
    py: Python<'_>,
    samples: Vec<Vec<f64>>,
    degree: usize,
    kind: &str,
    standardize: bool,
) -> PyResult<(PyMap, String)> {
    let samples = SampleSet::from_rows(&samples, Provenance::Target).map_err(to_py)?;
    let config = InverseBuildConfig { standardize, ..InverseBuildConfig::new(template(kind, degree)?) };
    let (map, report) = py.detach(|| build_inverse_map(&samples, &config)).map_err(to_py)?;
    Ok((PyMap { inner: map }, report.to_text()))
}

/// Variance diagnostic of a direct map against a Python log-density on a
/// tensor Gauss-Hermite rule.
#[pyfunction]
#[pyo3(signature = (map, log_density, order = 8))]
fn kl_variance(py: Python<'_>, map: &PyMap, log_density: Py<PyAny>, order: usize) -> PyResult<f64> {
    let dim = map.inner.dim();
    let target = PyTarget { dim, log_density, gradient: None };
    let inner = &map.inner;
    py.detach(|| {
        let rule = Integration::GaussHermite { order }.rule(dim)?;
        kl_variance_direct(inner, &target, &rule)
    })
    .map_err(to_py)
}

/// Joint `(theta, d)` samples of the biochemical oxygen demand model, data
/// block first.
#[pyfunction]
fn bod_joint_sample(py: Python<'_>, m: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    py.detach(|| bod::joint_sample(m, seed)).map(|s| rows(&s)).map_err(to_py)
}

#[pymodule]
fn trimap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrimapError", m.py().get_type::<TrimapError>())?;
    m.add_class::<PyMap>()?;
    m.add_function(wrap_pyfunction!(build_direct, m)?)?;
    m.add_function(wrap_pyfunction!(build_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(kl_variance, m)?)?;
    m.add_function(wrap_pyfunction!(bod_joint_sample, m)?)?;
    Ok(())
}
