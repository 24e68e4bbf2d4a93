//! Python module `mec_aoi`.

use std::collections::BTreeMap;

use mec_aoi as core;
use mec_aoi::frontier::write_csv;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::NotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn params(mu: f64, lambda: f64, a_max: Option<u32>, beta: f64) -> PyResult<core::ModelParams> {
    let a_max = match a_max {
        Some(a) => a,
        None => {
            core::ModelParams::with_defaults(mu, lambda).map_err(to_py)?;
            core::model::default_a_max(mu)
        }
    };
    core::ModelParams::new(mu, lambda, beta, a_max).map_err(to_py)
}

/// A stationary scheduling policy.
#[pyclass(frozen, name = "Policy", module = "mec_aoi", from_py_object)]
#[derive(Clone)]
pub struct PyPolicy {
    inner: core::Policy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn local_only() -> Self {
        PyPolicy { inner: core::Policy::LocalOnly }
    }

    #[staticmethod]
    fn mec_only() -> Self {
        PyPolicy { inner: core::Policy::MecOnly }
    }

    /// Offload whenever `a >= a_star`.
    #[staticmethod]
    fn age_threshold(a_star: u32) -> PyResult<Self> {
        if a_star < 1 {
            return Err(PyValueError::new_err("a_star must be >= 1"));
        }
        Ok(PyPolicy {
            inner: core::Policy::AgeThreshold { a_star },
        })
    }

    /// Offload once the update has been in service `z_star` slots.
    #[staticmethod]
    fn service_threshold(z_star: u32) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: core::service_threshold_policy(z_star).map_err(to_py)?,
        })
    }

    /// Offload whenever `a >= thresholds[z]`.
    #[staticmethod]
    fn z_threshold(thresholds: Vec<u32>) -> PyResult<Self> {
        if thresholds.is_empty() {
            return Err(PyValueError::new_err("thresholds must be non-empty"));
        }
        Ok(PyPolicy {
            inner: core::Policy::ZThreshold { thresholds },
        })
    }

    /// `True` when the policy offloads at `(a, z)`.
    fn offloads(&self, a: u32, z: u32) -> PyResult<bool> {
        let s = core::State::new(a, z).map_err(to_py)?;
        Ok(self.inner.action(s) == core::Action::Mec)
    }

    fn __repr__(&self) -> String {
        format!("Policy({})", self.inner.label())
    }
}

#[pyclass(frozen, get_all, name = "EvalResult", module = "mec_aoi")]
pub struct PyEvalResult {
    pub delta: f64,
    pub p_bar: f64,
    pub g: f64,
}

impl From<core::EvalResult> for PyEvalResult {
    fn from(r: core::EvalResult) -> Self {
        PyEvalResult {
            delta: r.delta,
            p_bar: r.p_bar,
            g: r.g,
        }
    }
}

#[pymethods]
impl PyEvalResult {
    fn __repr__(&self) -> String {
        format!("EvalResult(delta={}, p_bar={}, g={})", self.delta, self.p_bar, self.g)
    }
}

#[pyclass(frozen, get_all, name = "ServiceMoments", module = "mec_aoi")]
pub struct PyServiceMoments {
    pub e_s: f64,
    pub e_s2: f64,
    pub e_y: f64,
}

#[pyclass(frozen, get_all, name = "SolveReport", module = "mec_aoi")]
pub struct PySolveReport {
    pub g: f64,
    pub thresholds: BTreeMap<u32, u32>,
    pub iterations: usize,
    pub span_residual: f64,
    pub policy: PyPolicy,
}

impl From<core::SolveReport> for PySolveReport {
    fn from(r: core::SolveReport) -> Self {
        PySolveReport {
            g: r.g,
            thresholds: r.thresholds,
            iterations: r.iterations,
            span_residual: r.span_residual,
            policy: PyPolicy { inner: r.policy },
        }
    }
}

#[pymethods]
impl PySolveReport {
    fn __repr__(&self) -> String {
        format!("SolveReport(g={}, thresholds={:?})", self.g, self.thresholds)
    }
}

#[pyclass(frozen, get_all, name = "SimResult", module = "mec_aoi")]
pub struct PySimResult {
    pub delta_hat: f64,
    pub p_bar_hat: f64,
    pub stderr_delta: f64,
    pub stderr_p: f64,
    pub reset_fraction: f64,
    pub stderr_reset: f64,
    pub slots: u64,
    pub service_counts: Vec<u64>,
    pub completions: u64,
}

#[pyclass(frozen, get_all, name = "FrontierPoint", module = "mec_aoi")]
pub struct PyFrontierPoint {
    pub family: String,
    pub param: f64,
    pub mu: f64,
    pub p_bar: f64,
    pub delta: f64,
    pub method: String,
}

#[pymethods]
impl PyFrontierPoint {
    fn __repr__(&self) -> String {
        format!(
            "FrontierPoint({}, param={}, p_bar={}, delta={}, {})",
            self.family, self.param, self.p_bar, self.delta, self.method
        )
    }
}

#[pyfunction]
fn local_only(mu: f64) -> PyResult<PyEvalResult> {
    Ok(core::local_only(mu).map_err(to_py)?.into())
}

#[pyfunction]
fn mec_only() -> PyEvalResult {
    core::mec_only().into()
}

#[pyfunction]
fn service_moments(mu: f64, z_star: u32) -> PyResult<PyServiceMoments> {
    let m = core::service_moments(mu, z_star).map_err(to_py)?;
    Ok(PyServiceMoments {
        e_s: m.e_s,
        e_s2: m.e_s2,
        e_y: m.e_y,
    })
}

#[pyfunction]
fn service_threshold_eval(mu: f64, z_star: u32) -> PyResult<PyEvalResult> {
    Ok(core::service_threshold_eval(mu, z_star).map_err(to_py)?.into())
}

/// Exact `(delta, p_bar, g)` of `policy` on its induced chain.
#[pyfunction]
#[pyo3(signature = (policy, mu, lambda_ = 0.0, a_max = None))]
fn evaluate(policy: &PyPolicy, mu: f64, lambda_: f64, a_max: Option<u32>) -> PyResult<PyEvalResult> {
    let p = params(mu, lambda_, a_max, core::ModelParams::DEFAULT_BETA)?;
    Ok(core::evaluate_exact(&policy.inner, &p).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (mu, lambda_, a_max = None))]
fn rvi_solve(py: Python<'_>, mu: f64, lambda_: f64, a_max: Option<u32>) -> PyResult<PySolveReport> {
    let p = params(mu, lambda_, a_max, core::ModelParams::DEFAULT_BETA)?;
    Ok(py.detach(|| core::rvi_solve(&p)).map_err(to_py)?.into())
}

#[pyfunction]
fn brute_force_best_threshold(py: Python<'_>, mu: f64, lambda_: f64, a_max: u32, search_bound: u32) -> PyResult<PySolveReport> {
    let p = params(mu, lambda_, Some(a_max), core::ModelParams::DEFAULT_BETA)?;
    Ok(py
        .detach(|| core::brute_force_best_threshold(&p, search_bound))
        .map_err(to_py)?
        .into())
}

/// Names of the structural checks that fail, empty when all pass.
#[pyfunction]
#[pyo3(signature = (mu, lambda_, a_max = None, beta = 0.99, n_iters = 200))]
fn verify_structure(py: Python<'_>, mu: f64, lambda_: f64, a_max: Option<u32>, beta: f64, n_iters: usize) -> PyResult<Vec<String>> {
    let p = params(mu, lambda_, a_max, beta)?;
    py.detach(|| {
        let report = core::rvi_solve(&p)?;
        let iterates = core::discounted_vi(&p, n_iters)?;
        let s = core::verify_structure(&iterates, &report, &p);
        Ok(s.failures().map(|c| c.name.clone()).collect())
    })
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (policy, mu, horizon, seed, warmup = None, batches = 100))]
fn simulate(
    py: Python<'_>,
    policy: &PyPolicy,
    mu: f64,
    horizon: u64,
    seed: u64,
    warmup: Option<u64>,
    batches: usize,
) -> PyResult<PySimResult> {
    let mut cfg = core::SimConfig::new(horizon, seed);
    if let Some(w) = warmup {
        cfg.warmup = w;
    }
    cfg.batches = batches;
    let r = py.detach(|| core::simulate(&policy.inner, mu, &cfg)).map_err(to_py)?;
    Ok(PySimResult {
        delta_hat: r.delta_hat,
        p_bar_hat: r.p_bar_hat,
        stderr_delta: r.stderr_delta,
        stderr_p: r.stderr_p,
        reset_fraction: r.reset_fraction,
        stderr_reset: r.stderr_reset,
        slots: r.slots,
        service_counts: r.service_counts,
        completions: r.completions,
    })
}

fn frontier_rows(
    py: Python<'_>,
    mu: f64,
    a_stars: Option<Vec<u32>>,
    z_stars: Option<Vec<u32>>,
    lambdas: Option<Vec<f64>>,
    a_max: Option<u32>,
) -> PyResult<Vec<core::FrontierPoint>> {
    let mut cfg = core::FrontierConfig::for_mu(mu);
    if let Some(a) = a_stars {
        cfg.a_stars = a;
    }
    if let Some(z) = z_stars {
        cfg.z_stars = z;
    }
    if let Some(l) = lambdas {
        cfg.lambdas = l;
    }
    if let Some(a) = a_max {
        cfg.a_max = a;
    }
    py.detach(|| core::frontier(&cfg)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (mu = 0.01, a_stars = None, z_stars = None, lambdas = None, a_max = None))]
fn frontier(
    py: Python<'_>,
    mu: f64,
    a_stars: Option<Vec<u32>>,
    z_stars: Option<Vec<u32>>,
    lambdas: Option<Vec<f64>>,
    a_max: Option<u32>,
) -> PyResult<Vec<PyFrontierPoint>> {
    Ok(frontier_rows(py, mu, a_stars, z_stars, lambdas, a_max)?
        .into_iter()
        .map(|r| PyFrontierPoint {
            family: r.family.to_string(),
            param: r.param,
            mu: r.mu,
            p_bar: r.p_bar,
            delta: r.delta,
            method: r.method.to_string(),
        })
        .collect())
}

/// The frontier as CSV text, header first.
#[pyfunction]
#[pyo3(signature = (mu = 0.01, a_stars = None, z_stars = None, lambdas = None, a_max = None))]
fn frontier_csv(
    py: Python<'_>,
    mu: f64,
    a_stars: Option<Vec<u32>>,
    z_stars: Option<Vec<u32>>,
    lambdas: Option<Vec<f64>>,
    a_max: Option<u32>,
) -> PyResult<String> {
    let rows = frontier_rows(py, mu, a_stars, z_stars, lambdas, a_max)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "mec_aoi")]
pub fn mec_aoi_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyEvalResult>()?;
    m.add_class::<PyServiceMoments>()?;
    m.add_class::<PySolveReport>()?;
    m.add_class::<PySimResult>()?;
    m.add_class::<PyFrontierPoint>()?;
    m.add_function(wrap_pyfunction!(local_only, m)?)?;
    m.add_function(wrap_pyfunction!(mec_only, m)?)?;
    m.add_function(wrap_pyfunction!(service_moments, m)?)?;
    m.add_function(wrap_pyfunction!(service_threshold_eval, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(rvi_solve, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_best_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(verify_structure, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(frontier, m)?)?;
    m.add_function(wrap_pyfunction!(frontier_csv, m)?)?;
    Ok(())
}
