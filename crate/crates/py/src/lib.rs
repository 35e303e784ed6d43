//! Python bindings. Vectors and matrices cross the boundary as lists of
//! floats and lists of rows.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use costate_core::colloc::{compare_trajectories_from, solve_nlp, transcribe, NlpOptions, NlpStatus};
use costate_core::control::{
    reference_closed_loop, simulate_closed_loop, ClosedLoopResult, DisturbanceMode, DisturbanceSchedule, SimOptions,
};
use costate_core::dataset::{self, Dataset as CoreDataset};
use costate_core::network::{Activation, ConnModel};
use costate_core::problem::{builtin, Matrix, OcpProblem, Vector};
use costate_core::tpbvp::{self, SolverConfig};
use costate_core::train::{self, TrainConfig};
use costate_core::Error;

create_exception!(costate, NonConvergenceError, PyRuntimeError, "A solver or simulation did not converge.");

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Argument(_) => PyValueError::new_err(msg),
        Error::Divergence(_) | Error::NonConvergence(_) => NonConvergenceError::new_err(msg),
        Error::Parse { .. } | Error::Version { .. } | Error::Io(_) => PyOSError::new_err(msg),
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(values: &[f64]) -> Vector {
    Vector::from_column_slice(values)
}

/// A built-in optimal control problem.
#[pyclass(frozen, skip_from_py_object, module = "costate")]
#[derive(Clone)]
struct Problem {
    inner: OcpProblem,
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (name = "quad1d"))]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Problem {
            inner: builtin(name).map_err(py_err)?,
        })
    }

    fn with_input_bounds(&self, u_min: Vec<f64>, u_max: Vec<f64>) -> PyResult<Self> {
        let inner = self
            .inner
            .with_input_bounds(vector(&u_min), vector(&u_max))
            .map_err(py_err)?;
        Ok(Problem { inner })
    }

    fn with_grid(&self, t_final: f64, delta: f64) -> PyResult<Self> {
        Ok(Problem {
            inner: self.inner.with_grid(t_final, delta).map_err(py_err)?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id().to_string()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem('{}', t_final={}, delta={})",
            self.inner.id(),
            self.inner.t_final(),
            self.inner.delta()
        )
    }
}

/// Optimal state and co-state trajectories from the boundary-value solver.
#[pyfunction]
#[pyo3(signature = (problem, x0, segments = 20))]
fn solve_tpbvp<'py>(py: Python<'py>, problem: &Problem, x0: Vec<f64>, segments: usize) -> PyResult<Bound<'py, PyDict>> {
    let config = SolverConfig {
        n_segments: segments,
        ..SolverConfig::default()
    };
    let pair = tpbvp::solve_tpbvp(&problem.inner, &vector(&x0), &config).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("x", rows(&pair.x_traj))?;
    d.set_item("lam", rows(&pair.lambda_traj))?;
    d.set_item("converged", pair.converged)?;
    d.set_item("residual", pair.residual_norm)?;
    Ok(d)
}

#[pyclass(module = "costate")]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// Solve for `count` evenly spaced initial states on `[x0_min, x0_max]`.
    #[staticmethod]
    #[pyo3(signature = (problem, x0_min = -5.0, x0_max = 5.0, count = 101, segments = 20))]
    fn generate(problem: &Problem, x0_min: f64, x0_max: f64, count: usize, segments: usize) -> PyResult<Self> {
        let config = SolverConfig {
            n_segments: segments,
            ..SolverConfig::default()
        };
        let (inner, _) =
            dataset::generate_dataset(&problem.inner, x0_min, x0_max, count, &config).map_err(py_err)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset {
            inner: dataset::load_dataset(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dataset::save_dataset(&self.inner, path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn problem_id(&self) -> String {
        self.inner.problem_id.clone()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    /// Initial states in file order.
    fn initial_states(&self) -> Vec<Vec<f64>> {
        self.inner.entries.iter().map(|e| e.x0.iter().copied().collect()).collect()
    }

    /// `(x, lam)` trajectories of entry `index` as lists of rows.
    fn trajectory(&self, index: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let e = self
            .inner
            .entries
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))?;
        Ok((rows(&e.x_traj), rows(&e.lambda_traj)))
    }
}

/// A trained co-state network.
#[pyclass(module = "costate")]
struct Model {
    inner: ConnModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: ConnModel::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    /// Predicted co-state trajectory (horizon rows) for state `x`.
    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.forward(&vector(&x)).map_err(py_err)?))
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn problem_id(&self) -> String {
        self.inner.metadata.problem_id.clone()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.metadata.delta
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }
}

/// Train a fresh model; returns the model and one dict per epoch.
#[pyfunction]
#[pyo3(signature = (
    dataset, epochs = 20, lr = 1e-3, continuity_weight = 1.0, seed = 0,
    hidden = vec![64, 64], activation = "softplus", horizon = 11
))]
#[allow(clippy::too_many_arguments)]
fn train_model<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    epochs: usize,
    lr: f64,
    continuity_weight: f64,
    seed: u64,
    hidden: Vec<usize>,
    activation: &str,
    horizon: usize,
) -> PyResult<(Model, Vec<Bound<'py, PyDict>>)> {
    let ds = &dataset.inner;
    let config = TrainConfig {
        n_epoch: epochs,
        learning_rate: lr,
        continuity_weight,
        seed,
        hidden,
        activation: Activation::from_name(activation).map_err(py_err)?,
        horizon,
        ..TrainConfig::default()
    };
    let t_final = ds.delta * ds.steps.saturating_sub(1) as f64;
    let problem = builtin(&ds.problem_id)
        .and_then(|p| p.with_grid(t_final, ds.delta))
        .map_err(py_err)?;
    let outcome = py
        .detach(|| {
            let model = train::init_model(&problem, ds, &config)?;
            train::train(model, ds, &problem, &config)
        })
        .map_err(py_err)?;
    if let Some(reason) = outcome.aborted {
        return Err(NonConvergenceError::new_err(format!("training stopped early: {reason}")));
    }
    let mut log = Vec::with_capacity(outcome.log.len());
    for e in &outcome.log {
        let d = PyDict::new(py);
        d.set_item("epoch", e.epoch)?;
        d.set_item("prediction_loss", e.prediction_loss)?;
        d.set_item("continuity_loss", e.continuity_loss)?;
        d.set_item("diverged_windows", e.diverged_windows)?;
        log.push(d);
    }
    Ok((Model { inner: outcome.model }, log))
}

/// A simulated or optimized trajectory on the problem grid.
#[pyclass(module = "costate")]
struct Result {
    inner: ClosedLoopResult,
}

#[pymethods]
impl Result {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.x_series)
    }

    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.u_series)
    }

    #[getter]
    fn lambda0(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.lambda0_series)
    }

    #[getter]
    fn running_cost(&self) -> f64 {
        self.inner.running_cost
    }

    #[getter]
    fn diverged(&self) -> bool {
        self.inner.diverged
    }

    fn final_state(&self) -> Vec<f64> {
        self.inner.final_state().iter().copied().collect()
    }

    fn save_csv(&self, problem: &Problem, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&problem.inner, path).map_err(py_err)
    }

    #[staticmethod]
    fn load_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Result {
            inner: ClosedLoopResult::load_csv(path).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn schedule(disturbance: Option<&str>) -> PyResult<DisturbanceSchedule> {
    match disturbance {
        Some(text) => DisturbanceSchedule::parse(text).map_err(py_err),
        None => Ok(DisturbanceSchedule::empty()),
    }
}

fn sim_options(constrained: bool, mode: &str) -> PyResult<SimOptions> {
    Ok(SimOptions {
        constrained,
        disturbance_mode: DisturbanceMode::from_name(mode).map_err(py_err)?,
    })
}

/// Closed-loop run of the network-based controller.
#[pyfunction]
#[pyo3(signature = (problem, model, x0, constrained = false, disturbance = None, mode = "jump"))]
fn simulate(
    py: Python<'_>,
    problem: &Problem,
    model: &Model,
    x0: Vec<f64>,
    constrained: bool,
    disturbance: Option<&str>,
    mode: &str,
) -> PyResult<Result> {
    let sched = schedule(disturbance)?;
    let opts = sim_options(constrained, mode)?;
    let x0 = vector(&x0);
    let inner = py
        .detach(|| simulate_closed_loop(&problem.inner, &model.inner, &x0, &sched, opts))
        .map_err(py_err)?;
    Ok(Result { inner })
}

/// Closed-loop run that re-solves the boundary-value problem every step.
#[pyfunction]
#[pyo3(signature = (problem, x0, constrained = false, disturbance = None, mode = "jump", segments = 40))]
fn reference(
    py: Python<'_>,
    problem: &Problem,
    x0: Vec<f64>,
    constrained: bool,
    disturbance: Option<&str>,
    mode: &str,
    segments: usize,
) -> PyResult<Result> {
    let sched = schedule(disturbance)?;
    let opts = sim_options(constrained, mode)?;
    let solver = SolverConfig {
        n_segments: segments,
        ..SolverConfig::default()
    };
    let x0 = vector(&x0);
    let inner = py
        .detach(|| reference_closed_loop(&problem.inner, &x0, &sched, opts, &solver))
        .map_err(py_err)?;
    Ok(Result { inner })
}

/// Open-loop trapezoidal collocation; raises if the solver hits its
/// iteration limit.
#[pyfunction]
#[pyo3(signature = (problem, x0, max_outer = 60))]
fn collocation(py: Python<'_>, problem: &Problem, x0: Vec<f64>, max_outer: usize) -> PyResult<Result> {
    let x0 = vector(&x0);
    let opts = NlpOptions {
        max_outer,
        ..NlpOptions::default()
    };
    let (sol, nlp) = py
        .detach(|| {
            let nlp = transcribe(&problem.inner, &x0)?;
            let sol = solve_nlp(&nlp, &nlp.initial_guess(), &opts)?;
            Ok::<_, Error>((sol, nlp))
        })
        .map_err(py_err)?;
    if sol.status != NlpStatus::Converged {
        return Err(NonConvergenceError::new_err(format!(
            "collocation hit the iteration limit (max defect {:.3e})",
            sol.max_defect
        )));
    }
    Ok(Result {
        inner: sol.to_result(&nlp),
    })
}

/// Deviation metrics between two results on the same grid.
#[pyfunction]
#[pyo3(signature = (a, b, t_start = 0.0))]
fn compare<'py>(py: Python<'py>, a: &Result, b: &Result, t_start: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = compare_trajectories_from(&a.inner, &b.inner, t_start).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("max_state_deviation", r.max_state_deviation)?;
    d.set_item("mean_state_deviation", r.mean_state_deviation)?;
    d.set_item("max_input_deviation", r.max_input_deviation)?;
    d.set_item("cost_gap", r.cost_gap)?;
    Ok(d)
}

#[pymodule]
fn costate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NonConvergenceError", m.py().get_type::<NonConvergenceError>())?;
    m.add_class::<Problem>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Result>()?;
    m.add_function(wrap_pyfunction!(solve_tpbvp, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reference, m)?)?;
    m.add_function(wrap_pyfunction!(collocation, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
