//! Python module `pqkdens`: KS data generation, expansion bases, reservoir
//! embeddings, SVR training and full experiments.

use engine::basis::ExpansionBasis;
use engine::ks::{self, ScfSettings};
use engine::models::FermionProblem;
use engine::pipeline::{self, ExperimentConfig, KernelFamily};
use engine::reservoir::{self, ReservoirConfig};
use engine::svr::{self, SolverOptions, SvrModel};
use engine::Error;
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pqkdens, ConvergenceError, PyRuntimeError, "A solver did not converge.");

fn to_py(e: Error) -> PyErr {
    if e.is_convergence_failure() {
        ConvergenceError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn problem_by_name(name: &str) -> PyResult<FermionProblem> {
    match name {
        "h2" => Ok(FermionProblem::h2()),
        "triple_well" => Ok(FermionProblem::triple_well()),
        other => Err(PyValueError::new_err(format!("unknown problem {other:?}; expected \"h2\" or \"triple_well\""))),
    }
}

/// Grid nodes of the problem's default grid.
#[pyfunction]
fn grid_nodes(problem: &str) -> PyResult<Vec<f64>> {
    Ok(problem_by_name(problem)?.default_grid().nodes())
}

/// External potential on the default grid for raw (unscaled) features.
#[pyfunction]
fn potential(problem: &str, features: Vec<f64>) -> PyResult<Vec<f64>> {
    let p = problem_by_name(problem)?;
    p.potential(&features, &p.default_grid()).map_err(to_py)
}

/// Self-consistent KS density. Returns `(density, iterations, residual)`.
#[pyfunction]
#[pyo3(signature = (problem, features, mixing_alpha=0.3, scf_tolerance=1e-6, max_iterations=500))]
fn solve_ks(
    problem: &str,
    features: Vec<f64>,
    mixing_alpha: f64,
    scf_tolerance: f64,
    max_iterations: usize,
) -> PyResult<(Vec<f64>, usize, f64)> {
    let p = problem_by_name(problem)?;
    let grid = p.default_grid();
    let settings = ScfSettings { mixing_alpha, scf_tolerance, max_iterations, ..ScfSettings::default() };
    let v = p.ks_potential(&features, &grid).map_err(to_py)?;
    let sol = ks::solve_ks(&grid, &v, p.mass(), &settings).map_err(to_py)?;
    Ok((sol.density.values, sol.iterations, sol.residual))
}

/// Orthonormal region-potential basis on the problem's default grid.
#[pyclass(name = "ExpansionBasis", module = "pqkdens")]
struct PyBasis {
    inner: ExpansionBasis,
}

#[pymethods]
impl PyBasis {
    #[new]
    #[pyo3(signature = (problem, n_left, n_center, n_right, h_basis=20.0))]
    fn new(problem: &str, n_left: usize, n_center: usize, n_right: usize, h_basis: f64) -> PyResult<Self> {
        let p = problem_by_name(problem)?;
        let inner = ExpansionBasis::build(&p, &p.default_grid(), n_left, n_center, n_right, h_basis).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn functions(&self) -> Vec<Vec<f64>> {
        self.inner.functions.clone()
    }

    fn orthonormality_error(&self) -> f64 {
        self.inner.orthonormality_error()
    }

    fn project(&self, density: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.project(0, &density).map_err(to_py)?.u)
    }

    fn reconstruct(&self, coefficients: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.reconstruct(&coefficients).map_err(to_py)
    }
}

/// Four-atom square Rydberg reservoir.
#[pyclass(name = "Reservoir", module = "pqkdens")]
struct PyReservoir {
    inner: ReservoirConfig,
}

#[pymethods]
impl PyReservoir {
    /// H₂ encoding on sites 0 and 2; other sites take `v_homo`.
    #[staticmethod]
    #[pyo3(signature = (vnn=4.0, omega_glob=5.0, delta_glob=0.0, delta_loc=-3.5, v_homo=0.5))]
    fn h2(vnn: f64, omega_glob: f64, delta_glob: f64, delta_loc: f64, v_homo: f64) -> Self {
        Self { inner: ReservoirConfig::h2(vnn, omega_glob, delta_glob, delta_loc, v_homo) }
    }

    #[staticmethod]
    #[pyo3(signature = (vnn=0.5, omega_glob=5.0, delta_glob=5.0, delta_loc=-1.0))]
    fn triple_well(vnn: f64, omega_glob: f64, delta_glob: f64, delta_loc: f64) -> Self {
        Self { inner: ReservoirConfig::triple_well(vnn, omega_glob, delta_glob, delta_loc) }
    }

    #[getter]
    fn omega_max(&self) -> f64 {
        self.inner.omega_max()
    }

    #[getter]
    fn vnn(&self) -> f64 {
        self.inner.vnn()
    }

    /// Measurement vectors `[mz_j..., czz_ij...]` of each sample at each time,
    /// as `rows[sample][time]`.
    fn embed(&self, features: Vec<Vec<f64>>, times: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let table = reservoir::embed_samples(&self.inner, &features, &times).map_err(to_py)?;
        let mut out = vec![Vec::with_capacity(times.len()); features.len()];
        for row in table.rows {
            out[row.sample_id].push(row.values);
        }
        Ok(out)
    }

    fn observable_names(&self) -> Vec<String> {
        reservoir::observable_names(self.inner.num_qubits())
    }
}

/// Trained ε-SVR regressor.
#[pyclass(name = "SvrModel", module = "pqkdens")]
struct PySvrModel {
    inner: SvrModel,
}

#[pymethods]
impl PySvrModel {
    #[getter]
    fn dual(&self) -> Vec<f64> {
        self.inner.dual.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    #[getter]
    fn dual_objective(&self) -> f64 {
        self.inner.dual_objective
    }

    #[getter]
    fn duality_gap(&self) -> f64 {
        self.inner.duality_gap
    }

    /// Prediction from the kernel values between a point and each training sample.
    fn predict(&self, kernel_row: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&kernel_row).map_err(to_py)
    }
}

fn square(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("gram matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Fits an ε-SVR on a precomputed Gram matrix.
#[pyfunction]
fn train_svr(gram: Vec<Vec<f64>>, targets: Vec<f64>, c: f64, epsilon: f64) -> PyResult<PySvrModel> {
    let k = square(gram)?;
    let inner = svr::train_svr_with(&k, &targets, c, epsilon, &SolverOptions::default()).map_err(to_py)?;
    Ok(PySvrModel { inner })
}

#[pyfunction]
fn linear_gram(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let g = svr::gram_linear(&x).map_err(to_py)?;
    Ok(g.entries.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn rbf_gram(x: Vec<Vec<f64>>, gamma: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = svr::gram_rbf(&x, gamma).map_err(to_py)?;
    Ok(g.entries.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Experiment configuration as a JSON string: a named preset, or the H₂ default.
#[pyfunction]
#[pyo3(signature = (name=None))]
fn config_json(name: Option<&str>) -> PyResult<String> {
    let cfg = match name {
        Some(n) => pipeline::preset(n).map_err(to_py)?,
        None => ExperimentConfig::h2_default(),
    };
    serde_json::to_string_pretty(&cfg).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs the experiment described by a JSON config. Returns a dict with
/// `times`, `omega_max`, `curves` (kernel → per-time mean error, classical
/// kernels repeated across times) and `failures`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg: ExperimentConfig = serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(to_py)?;
    let report = py.detach(|| pipeline::run_experiment(&cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("times", report.times.clone())?;
    out.set_item("omega_max", report.omega_max)?;
    let curves = PyDict::new(py);
    for k in [KernelFamily::Linear, KernelFamily::Rbf, KernelFamily::Pqk] {
        if cfg.kernels.contains(&k) {
            curves.set_item(k.label(), report.curve(k))?;
        }
    }
    out.set_item("curves", curves)?;
    let failures: Vec<String> = report.failures.iter().map(|f| f.message.clone()).collect();
    out.set_item("failures", failures)?;
    Ok(out)
}

#[pymodule]
fn pqkdens(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyReservoir>()?;
    m.add_class::<PySvrModel>()?;
    m.add_function(wrap_pyfunction!(grid_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(potential, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ks, m)?)?;
    m.add_function(wrap_pyfunction!(train_svr, m)?)?;
    m.add_function(wrap_pyfunction!(linear_gram, m)?)?;
    m.add_function(wrap_pyfunction!(rbf_gram, m)?)?;
    m.add_function(wrap_pyfunction!(config_json, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
