//! Python module `sgd_landscape`.
//!
//! Structured results come back as plain dicts built from the same JSON the
//! CLI writes.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use sgd_landscape::dynamics::{self, HittingOptions, Method};
use sgd_landscape::experiment::{self, ExperimentConfig};
use sgd_landscape::gibbs::{self, gaussian_density};
use sgd_landscape::grid::{Axis, GridPolicy, GridSpec, Resolution};
use sgd_landscape::objective::{self, ScalarField};
use sgd_landscape::pde::{self, FpOptions};
use sgd_landscape::verify::{self, Suite};
use sgd_landscape::{morse, spectral, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Catalog { .. } | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A catalog objective with exact derivatives.
#[pyclass(name = "Field", frozen)]
struct PyField {
    inner: ScalarField,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { inner: objective::catalog(name).map_err(err)? })
    }

    #[staticmethod]
    fn names() -> Vec<String> {
        objective::CATALOG.iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn minimizer(&self) -> Option<Vec<f64>> {
        self.inner.minimizer().map(<[f64]>::to_vec)
    }

    #[getter]
    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.value(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.gradient(&x))
    }

    /// Row-major d×d Hessian.
    fn hessian(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.hessian(&x))
    }

    fn __repr__(&self) -> String {
        format!("Field('{}', dim={})", self.inner.name(), self.inner.dim())
    }
}

impl PyField {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.inner.dim(), x.len())));
        }
        Ok(())
    }
}

/// ε(s) = E_μ[f] − f* on a certified grid.
#[pyfunction]
#[pyo3(signature = (field, s, nodes = 801))]
fn epsilon(field: &PyField, s: f64, nodes: usize) -> PyResult<f64> {
    let grid = GridPolicy::gibbs(Resolution::Nodes(nodes)).build(&field.inner, s).map_err(err)?;
    gibbs::epsilon_of_s(&field.inner, s, &grid).map_err(err)
}

/// Smallest Witten eigenvalues and λ_s.
#[pyfunction]
#[pyo3(signature = (field, s, nodes = 2000))]
fn spectrum<'py>(py: Python<'py>, field: &PyField, s: f64, nodes: usize) -> PyResult<Bound<'py, PyAny>> {
    let sp = spectral::decay_constant(&field.inner, s, &GridPolicy::ground_state(Resolution::Nodes(nodes))).map_err(err)?;
    to_py(py, &sp)
}

#[pyfunction]
fn lambda_ratio(barrier: f64, s1: f64, s2: f64) -> f64 {
    spectral::lambda_ratio(barrier, s1, s2)
}

/// Critical points, saddle pairings and H_f on a box of the given half width.
#[pyfunction]
#[pyo3(signature = (field, half_width = 3.0, nodes = 601))]
fn morse_analysis<'py>(py: Python<'py>, field: &PyField, half_width: f64, nodes: usize) -> PyResult<Bound<'py, PyAny>> {
    let d = field.inner.dim();
    let grid = GridSpec::new((0..d).map(|_| Axis::new(-half_width, half_width, nodes)).collect()).map_err(err)?;
    to_py(py, &morse::analyze(&field.inner, &grid).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (field, s, k_max, x0, n_replicas = 1000, seed = 0, method = "sgd"))]
fn ensemble<'py>(
    py: Python<'py>,
    field: &PyField,
    s: f64,
    k_max: usize,
    x0: Vec<f64>,
    n_replicas: usize,
    seed: u64,
    method: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let method: Method = method.parse().map_err(err)?;
    let stats = py
        .detach(|| dynamics::run_ensemble(method, &field.inner, s, k_max, &x0, n_replicas, seed))
        .map_err(err)?;
    to_py(py, &stats)
}

#[pyfunction]
#[pyo3(signature = (field, s, x_start, x_target, n_replicas = 10_000, dt = 1e-3, seed = 0))]
fn hitting_time<'py>(
    py: Python<'py>,
    field: &PyField,
    s: f64,
    x_start: f64,
    x_target: f64,
    n_replicas: usize,
    dt: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = HittingOptions { n_replicas, dt, seed, ..Default::default() };
    let r = py.detach(|| dynamics::hitting_time_mc(&field.inner, s, x_start, x_target, &opts)).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn kramers_time(field: &PyField, x_min: f64, x_saddle: f64, s: f64) -> PyResult<f64> {
    dynamics::kramers_time(&field.inner, x_min, x_saddle, s).map_err(err)
}

#[pyfunction]
fn ou_hitting_time(theta: f64, dist: f64, s: f64) -> f64 {
    dynamics::ou_hitting_time(theta, dist, s)
}

/// Fokker–Planck evolution of a Gaussian start on the certified grid.
///
/// Returns the grid nodes and one density per snapshot time.
#[pyfunction]
#[pyo3(signature = (field, s, mean, variance, dt = 0.01, horizon = 10.0, snapshots = 20, nodes = 2000))]
#[allow(clippy::too_many_arguments)]
fn fokker_planck<'py>(
    py: Python<'py>,
    field: &PyField,
    s: f64,
    mean: Vec<f64>,
    variance: f64,
    dt: f64,
    horizon: f64,
    snapshots: usize,
    nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = GridPolicy::gibbs(Resolution::Nodes(nodes)).build(&field.inner, s).map_err(err)?;
    let rho0 = gaussian_density(&grid, &mean, variance).map_err(err)?;
    let opts = FpOptions::uniform(dt, horizon, snapshots);
    let snaps = py.detach(|| pde::fp_evolve(&field.inner, s, &rho0, &grid, &opts)).map_err(err)?;
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.node(i)).collect();
    to_py(py, &serde_json::json!({ "nodes": nodes, "snapshots": snaps }))
}

/// Iterations to rough stationarity of a·s + b·e^{−λ_s t}, λ_s = e^{−c/s}.
#[pyfunction]
#[pyo3(signature = (a, b, c, s, fraction = 0.1))]
fn idealized_iterations(a: f64, b: f64, c: f64, s: f64, fraction: f64) -> PyResult<f64> {
    experiment::idealized_iterations(a, b, c, s, fraction).map_err(err)
}

#[pyfunction]
fn required_time(s: f64, a: f64, c: f64, rho_gap: f64, epsilon: f64, lambda_s: f64) -> PyResult<f64> {
    experiment::required_time(s, a, c, rho_gap, epsilon, lambda_s).map_err(err)
}

/// Run a TOML experiment config; artifacts and report.json land in `out`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str, out: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    let (report, timing) = py.detach(|| experiment::run(&cfg, &out, |_| {})).map_err(err)?;
    experiment::write_outputs(&out, &report, &timing).map_err(err)?;
    to_py(py, &report)
}

/// Run one acceptance criterion.
#[pyfunction]
#[pyo3(signature = (id, suite = "fast", seed = 0))]
fn run_criterion<'py>(py: Python<'py>, id: u32, suite: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let suite: Suite = suite.parse().map_err(err)?;
    if !verify::CRITERIA.iter().any(|c| c.0 == id) {
        return Err(PyValueError::new_err(format!("no criterion {id}")));
    }
    let r = py.detach(|| verify::run_criterion(id, suite, seed));
    to_py(py, &r)
}

#[pymodule]
#[pyo3(name = "sgd_landscape")]
fn sgd_landscape_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(morse_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(hitting_time, m)?)?;
    m.add_function(wrap_pyfunction!(kramers_time, m)?)?;
    m.add_function(wrap_pyfunction!(ou_hitting_time, m)?)?;
    m.add_function(wrap_pyfunction!(fokker_planck, m)?)?;
    m.add_function(wrap_pyfunction!(idealized_iterations, m)?)?;
    m.add_function(wrap_pyfunction!(required_time, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    Ok(())
}
