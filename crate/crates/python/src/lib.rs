//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use censored_lds::estimator::{learn_censored_lds, SonSgConfig};
use censored_lds::sets::{make_chasing_schedule, make_static_schedule, HalfSpace, ObservableSet};
use censored_lds::simulator::{self, CensoredTrajectory, SystemSpec};
use censored_lds::truncated;

fn err(e: censored_lds::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix must be a nonempty list of equal-length rows"));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

fn from_matrix(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// An observable region of state space.
#[pyclass(name = "ObservableSet", frozen, from_py_object)]
#[derive(Clone)]
struct PySet(ObservableSet);

#[pymethods]
impl PySet {
    #[staticmethod]
    fn full_space(dim: usize) -> PyResult<Self> {
        ObservableSet::full_space(dim).map(Self).map_err(err)
    }

    #[staticmethod]
    fn empty(dim: usize) -> PyResult<Self> {
        ObservableSet::empty(dim).map(Self).map_err(err)
    }

    /// `{x : normal . x >= offset}`.
    #[staticmethod]
    fn half_space(normal: Vec<f64>, offset: f64) -> PyResult<Self> {
        ObservableSet::half_space(normal, offset).map(Self).map_err(err)
    }

    #[staticmethod]
    fn axis_box(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        ObservableSet::axis_box(lower, upper).map(Self).map_err(err)
    }

    /// Takes `(normal, offset)` tuples.
    #[staticmethod]
    fn union_of_half_spaces(members: Vec<(Vec<f64>, f64)>) -> PyResult<Self> {
        let hs = members
            .into_iter()
            .map(|(n, c)| HalfSpace::new(n, c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        ObservableSet::union_of_half_spaces(hs).map(Self).map_err(err)
    }

    #[staticmethod]
    fn intersection(members: Vec<PySet>) -> PyResult<Self> {
        ObservableSet::intersection(members.into_iter().map(|s| s.0).collect())
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (dim, axis, gap=None))]
    fn two_slab(dim: usize, axis: usize, gap: Option<f64>) -> PyResult<Self> {
        match gap {
            Some(g) => ObservableSet::two_slab(dim, axis, g),
            None => ObservableSet::two_slab_default(dim, axis),
        }
        .map(Self)
        .map_err(err)
    }

    fn contains(&self, x: Vec<f64>) -> PyResult<bool> {
        self.0.contains(&x).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind()
    }

    fn __repr__(&self) -> String {
        format!("ObservableSet({:?})", self.0)
    }
}

/// A simulated censored run.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory(CensoredTrajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn horizon(&self) -> usize {
        self.0.horizon
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    /// All `T + 1` states, censored or not.
    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        self.0.states.iter().map(|x| x.iter().copied().collect()).collect()
    }

    #[getter]
    fn observed(&self) -> Vec<bool> {
        self.0.observed.clone()
    }

    /// Observed states, `None` where censored.
    fn observations(&self) -> Vec<Option<Vec<f64>>> {
        self.0
            .censored_view()
            .observations
            .into_iter()
            .map(|o| o.map(|x| x.iter().copied().collect()))
            .collect()
    }

    fn beta_hat(&self) -> f64 {
        self.0.beta_hat()
    }

    fn num_pairs(&self) -> usize {
        simulator::extract_pairs(&self.0.censored_view()).len()
    }
}

/// Runs `x_{t+1} = A x_t + w_t` for `horizon` steps. Pass either `set` for
/// a static schedule or `chasing_offsets` for a state-dependent one.
#[pyfunction]
#[pyo3(signature = (a_star, horizon, seed, set=None, chasing_offsets=None, x0=None))]
fn simulate(
    a_star: Vec<Vec<f64>>,
    horizon: usize,
    seed: u64,
    set: Option<PySet>,
    chasing_offsets: Option<Vec<f64>>,
    x0: Option<Vec<f64>>,
) -> PyResult<PyTrajectory> {
    let a = to_matrix(a_star)?;
    let spec = match x0 {
        Some(x) => SystemSpec::with_initial_state(a, DVector::from_vec(x)),
        None => SystemSpec::new(a),
    }
    .map_err(err)?;
    let schedule = match (set, chasing_offsets) {
        (Some(s), None) => make_static_schedule(s.0),
        (None, Some(o)) => make_chasing_schedule(o).map_err(err)?,
        (None, None) => make_static_schedule(ObservableSet::full_space(spec.dim()).map_err(err)?),
        (Some(_), Some(_)) => {
            return Err(PyValueError::new_err("give at most one of set and chasing_offsets"));
        }
    };
    simulator::simulate(&spec, &schedule, horizon, seed)
        .map(PyTrajectory)
        .map_err(err)
}

/// Returns `(a_hat, report)` where `report` is a dict of run statistics.
#[pyfunction]
#[pyo3(signature = (trajectory, seed, alpha=0.5, c_eta=1, c_gamma=2, c_s=2.0, ground_truth=None))]
#[allow(clippy::too_many_arguments)]
fn learn<'py>(
    py: Python<'py>,
    trajectory: &PyTrajectory,
    seed: u64,
    alpha: f64,
    c_eta: u32,
    c_gamma: u32,
    c_s: f64,
    ground_truth: Option<Vec<Vec<f64>>>,
) -> PyResult<(Vec<Vec<f64>>, Bound<'py, PyDict>)> {
    let cfg = SonSgConfig {
        alpha,
        c_eta,
        c_gamma,
        c_s,
        ..Default::default()
    };
    let truth = ground_truth.map(to_matrix).transpose()?;
    let view = trajectory.0.censored_view();
    let (a_hat, report) = py
        .detach(|| learn_censored_lds(&view, &cfg, seed, truth.as_ref()))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("eta", report.eta)?;
    d.set_item("gamma", report.gamma)?;
    d.set_item("test_draws", report.test_draws)?;
    d.set_item("total_pairs", report.total_pairs)?;
    d.set_item("warmup_pairs", report.warmup_pairs)?;
    d.set_item("estimation_pairs", report.estimation_pairs)?;
    d.set_item("censor_aware", report.branch_counts.censor_aware)?;
    d.set_item("censor_oblivious", report.branch_counts.censor_oblivious)?;
    d.set_item("invariants_pass", report.invariants.all_pass())?;
    d.set_item("generic_bound", report.invariants.generic_bound)?;
    if let Some(t) = &truth {
        d.set_item("error_frobenius", (&a_hat - t).norm())?;
    }
    Ok((from_matrix(&a_hat), d))
}

/// `sum_{t < horizon} A^t (A^t)^T`.
#[pyfunction]
fn gramian(a: Vec<Vec<f64>>, horizon: usize) -> PyResult<Vec<Vec<f64>>> {
    simulator::gramian(&to_matrix(a)?, horizon)
        .map(|g| from_matrix(&g))
        .map_err(err)
}

/// `(mass, mean, variance)` of N(mu, 1) restricted to `[a, b]`.
#[pyfunction]
fn truncnorm(mu: f64, a: f64, b: f64) -> PyResult<(f64, f64, f64)> {
    truncated::truncnorm_1d_exact(mu, a, b)
        .map(|t| (t.mass, t.mean, t.variance))
        .map_err(err)
}

#[pyfunction]
fn survival_lower_bound(alpha: f64, r: f64) -> f64 {
    truncated::survival_lower_bound(alpha, r)
}

#[pymodule]
fn censored_lds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySet>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(gramian, m)?)?;
    m.add_function(wrap_pyfunction!(truncnorm, m)?)?;
    m.add_function(wrap_pyfunction!(survival_lower_bound, m)?)?;
    Ok(())
}
