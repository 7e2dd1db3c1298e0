//! Python bindings for the age-distribution solvers.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use agedist_core::curvefit;
use agedist_core::distributions::{self, ActivationVector, AgeDistribution, ModelKind, ModelParams, Shape, SurvivalVector};
use agedist_core::io::{self as aio, ParamsFile};
use agedist_core::model1::{self, FreeParam};
use agedist_core::model2::{self, DEConfig};
use agedist_core::pipeline::{self, PipelineConfig, Route};
use agedist_core::simulator::{self, SimConfig};
use agedist_core::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(msg) => PyIOError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn shape_name(shape: Shape) -> &'static str {
    match shape {
        Shape::MonotoneNonIncreasing => "monotone",
        Shape::NonMonotone => "non-monotone",
    }
}

fn route_name(route: Route) -> &'static str {
    match route {
        Route::Model1 => "model1",
        Route::Model2 => "model2",
        Route::CurveFit => "curve-fit",
        Route::Failed => "failed",
    }
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Model1 => "model1",
        ModelKind::Model2 => "model2",
        ModelKind::Model1OnFitted => "model1-on-fitted",
    }
}

/// Parses `None`, a float, `"mid"` or `"rand"` into a free-parameter choice.
fn free_param(p_n: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<FreeParam> {
    let Some(value) = p_n else {
        return Ok(FreeParam::Midpoint);
    };
    if let Ok(v) = value.extract::<f64>() {
        return Ok(FreeParam::Value(v));
    }
    match value.extract::<String>()?.as_str() {
        "mid" => Ok(FreeParam::Midpoint),
        "rand" => Ok(FreeParam::SeededRandom(seed)),
        other => Err(PyValueError::new_err(format!(
            "p_n must be a number, 'mid' or 'rand', got {other:?}"
        ))),
    }
}

/// Normalized population shares over ordered age groups.
#[pyclass(name = "AgeDistribution", frozen, from_py_object)]
#[derive(Clone)]
struct PyAgeDistribution(AgeDistribution);

#[pymethods]
impl PyAgeDistribution {
    /// Normalizes raw counts; trailing empty groups are dropped.
    #[new]
    #[pyo3(signature = (counts, labels=None))]
    fn new(counts: Vec<f64>, labels: Option<Vec<String>>) -> PyResult<Self> {
        let labels = labels.unwrap_or_else(|| distributions::index_labels(counts.len()));
        distributions::normalize(&counts, &labels).map(Self).map_err(to_py)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn proportions(&self) -> Vec<f64> {
        self.0.proportions().to_vec()
    }

    #[getter]
    fn shape(&self) -> &'static str {
        shape_name(self.0.shape())
    }

    fn __len__(&self) -> usize {
        self.0.n()
    }

    fn __repr__(&self) -> String {
        format!("AgeDistribution(n={}, shape={})", self.0.n(), self.shape())
    }
}

/// Survival probabilities, optional activation rates and diagnostics.
#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyModelParams(ModelParams);

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (survival, activation=None))]
    fn new(survival: Vec<f64>, activation: Option<Vec<f64>>) -> PyResult<Self> {
        let survival = SurvivalVector::new(survival).map_err(to_py)?;
        let (kind, activation) = match activation {
            Some(a) => (ModelKind::Model2, Some(ActivationVector::new(a).map_err(to_py)?)),
            None => (ModelKind::Model1, None),
        };
        ModelParams::new(kind, survival, activation).map(Self).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        kind_name(self.0.kind)
    }

    #[getter]
    fn survival(&self) -> Vec<f64> {
        self.0.survival.as_slice().to_vec()
    }

    #[getter]
    fn activation(&self) -> Option<Vec<f64>> {
        self.0.activation.as_ref().map(|a| a.as_slice().to_vec())
    }

    #[getter]
    fn diagnostics(&self) -> BTreeMap<String, f64> {
        self.0.diagnostics.clone()
    }

    #[getter]
    fn provenance(&self) -> BTreeMap<String, String> {
        self.0.provenance.clone()
    }

    /// Analytic steady state reached under these parameters.
    fn steady_state(&self) -> PyResult<PyAgeDistribution> {
        match &self.0.activation {
            Some(a) => model2::steady_state2(&self.0.survival, a),
            None => model1::steady_state(&self.0.survival),
        }
        .map(PyAgeDistribution)
        .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(kind={}, n={})", self.kind(), self.0.n())
    }
}

#[pyclass(name = "CurveFit", frozen, get_all)]
struct PyCurveFit {
    a: f64,
    b: f64,
    c: f64,
    k: usize,
    wasserstein: f64,
    fitted: PyAgeDistribution,
    /// `(k, wasserstein)` for every breakpoint; failed fits score infinity.
    table: Vec<(usize, f64)>,
}

#[pyclass(name = "Simulation", frozen, get_all)]
struct PySimulation {
    steady_estimate: Vec<f64>,
    final_snapshot: Vec<f64>,
    total_deaths: u64,
    trajectory: Option<Vec<Vec<f64>>>,
}

#[pyclass(name = "Solved", frozen, get_all)]
struct PySolved {
    route: &'static str,
    params: Option<PyModelParams>,
    target: Option<PyAgeDistribution>,
    failure: Option<String>,
    poor_fit: bool,
}

#[pyfunction]
fn classify(dist: &PyAgeDistribution) -> &'static str {
    shape_name(distributions::classify(&dist.0))
}

#[pyfunction]
fn wasserstein(a: &PyAgeDistribution, b: &PyAgeDistribution) -> PyResult<f64> {
    distributions::wasserstein(&a.0, &b.0).map_err(to_py)
}

#[pyfunction]
fn mean_absolute_error(a: &PyAgeDistribution, b: &PyAgeDistribution) -> PyResult<f64> {
    distributions::mean_absolute_error(&a.0, &b.0).map_err(to_py)
}

/// Closed-form survival probabilities for a monotone distribution.
#[pyfunction]
#[pyo3(signature = (dist, p_n=None, seed=0))]
fn solve_model1(dist: &PyAgeDistribution, p_n: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<PyModelParams> {
    let choice = free_param(p_n, seed)?;
    let survival = model1::solve(&dist.0, choice).map_err(to_py)?;
    let mut params = ModelParams::new(ModelKind::Model1, survival, None).map_err(to_py)?;
    params.provenance.insert("free_param".into(), choice.describe());
    Ok(PyModelParams(params))
}

/// Searches survival and activation rates with differential evolution.
#[pyfunction]
#[pyo3(signature = (dist, seed=0, max_iterations=250, threshold=1e-4))]
fn optimize_model2(
    py: Python<'_>,
    dist: &PyAgeDistribution,
    seed: u64,
    max_iterations: usize,
    threshold: f64,
) -> PyResult<(PyModelParams, bool)> {
    let config = DEConfig {
        max_iterations,
        success_threshold: threshold,
        ..DEConfig::with_seed(seed)
    };
    let target = dist.0.clone();
    let solution = py
        .detach(move || model2::optimize(&target, &config))
        .map_err(to_py)?;
    let mut params = ModelParams::new(ModelKind::Model2, solution.survival, Some(solution.activation))
        .map_err(to_py)?;
    params.diagnostics.insert("mae".into(), solution.mae);
    params
        .diagnostics
        .insert("iterations_used".into(), solution.iterations_used as f64);
    params.provenance.insert("de_seed".into(), seed.to_string());
    Ok((PyModelParams(params), solution.converged))
}

#[pyfunction]
fn fit_curve(dist: &PyAgeDistribution) -> PyResult<PyCurveFit> {
    let fit = curvefit::fit(&dist.0).map_err(to_py)?;
    Ok(PyCurveFit {
        a: fit.params.a,
        b: fit.params.b,
        c: fit.params.c,
        k: fit.params.k,
        wasserstein: fit.wasserstein_to_original,
        table: fit.per_k_table.iter().map(|row| (row.k, row.wasserstein)).collect(),
        fitted: PyAgeDistribution(fit.fitted),
    })
}

/// Runs the agent simulation starting from `dist`.
#[pyfunction]
#[pyo3(signature = (dist, params, agents=10_000, steps=350, burn_in=300, seed=0, trajectory=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    dist: &PyAgeDistribution,
    params: &PyModelParams,
    agents: usize,
    steps: usize,
    burn_in: usize,
    seed: u64,
    trajectory: bool,
) -> PyResult<PySimulation> {
    let config = SimConfig {
        num_agents: agents,
        num_steps: steps,
        burn_in,
        seed,
        record_trajectory: trajectory,
        ..SimConfig::default()
    };
    let (target, params) = (dist.0.clone(), params.0.clone());
    let result = py
        .detach(move || simulator::run(&target, &params, &config))
        .map_err(to_py)?;
    Ok(PySimulation {
        steady_estimate: result.steady_estimate,
        final_snapshot: result.final_snapshot,
        total_deaths: result.total_deaths,
        trajectory: result.trajectory,
    })
}

/// Runs the full model-selection cascade for one distribution.
#[pyfunction]
#[pyo3(signature = (dist, seed=0, validate=true))]
fn solve(py: Python<'_>, dist: &PyAgeDistribution, seed: u64, validate: bool) -> PySolved {
    let config = PipelineConfig {
        de: DEConfig::with_seed(seed),
        sim: SimConfig::with_seed(seed),
        validate,
        ..PipelineConfig::default()
    };
    let target = dist.0.clone();
    let solved = py.detach(move || pipeline::select_and_solve(&target, &config));
    PySolved {
        route: route_name(solved.route),
        params: solved.params.map(PyModelParams),
        target: solved.target.map(PyAgeDistribution),
        failure: solved.failure,
        poor_fit: solved.poor_fit,
    }
}

/// Writes a parameter file that `agedist simulate` can read.
#[pyfunction]
#[pyo3(signature = (path, target, params, country=None))]
fn save_params(path: PathBuf, target: &PyAgeDistribution, params: &PyModelParams, country: Option<String>) -> PyResult<()> {
    let file = ParamsFile::new(country, target.0.clone(), params.0.clone());
    aio::emit_params(&file, &path).map_err(to_py)
}

/// Reads a parameter file; returns `(target, params)`.
#[pyfunction]
fn load_params(path: PathBuf) -> PyResult<(PyAgeDistribution, PyModelParams)> {
    let file = aio::load_params(&path).map_err(to_py)?;
    Ok((PyAgeDistribution(file.target), PyModelParams(file.params)))
}

#[pymodule]
fn agedist(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyAgeDistribution>()?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyCurveFit>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PySolved>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(mean_absolute_error, m)?)?;
    m.add_function(wrap_pyfunction!(solve_model1, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_model2, m)?)?;
    m.add_function(wrap_pyfunction!(fit_curve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(save_params, m)?)?;
    m.add_function(wrap_pyfunction!(load_params, m)?)?;
    Ok(())
}
