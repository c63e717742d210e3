//! Python bindings. States, configurations and the main maps and checks are
//! exposed; parameters are plain floats and boundaries are the strings
//! `"open"` and `"periodic"`.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use toda_core::backlund::{self, BtParam};
use toda_core::continuous::{self, HamiltonianSystem, OneForm, PolylinePath, DEFAULT_STEP};
use toda_core::harness::{cmd_verify, RunConfig};
use toda_core::zero_curvature;
use toda_core::{Boundary, LatticeState, TodaError};

create_exception!(
    toda_multiform,
    BranchError,
    PyRuntimeError,
    "The real branch of a Bäcklund step does not exist."
);
create_exception!(
    toda_multiform,
    SolverError,
    PyRuntimeError,
    "A numerical solve or integration failed."
);

fn to_py(e: TodaError) -> PyErr {
    let msg = e.to_string();
    if e.is_branch_failure() {
        BranchError::new_err(msg)
    } else {
        match e {
            TodaError::NewtonDiverged { .. } | TodaError::Divergence { .. } => SolverError::new_err(msg),
            _ => PyValueError::new_err(msg),
        }
    }
}

fn param(v: f64) -> PyResult<BtParam> {
    BtParam::new(v).map_err(to_py)
}

#[pyclass(name = "LatticeState", module = "toda_multiform", from_py_object)]
#[derive(Clone)]
pub struct PyLatticeState {
    inner: LatticeState,
}

#[pymethods]
impl PyLatticeState {
    #[new]
    fn new(x: Vec<f64>, p: Vec<f64>) -> PyResult<Self> {
        LatticeState::new(x, p)
            .map(|inner| PyLatticeState { inner })
            .map_err(to_py)
    }

    /// Seeded random state suited to `boundary`.
    #[staticmethod]
    #[pyo3(signature = (n, boundary = "open", seed = 0))]
    fn sampled(n: usize, boundary: &str, seed: u64) -> PyResult<Self> {
        let b: Boundary = boundary.parse().map_err(to_py)?;
        Ok(PyLatticeState {
            inner: LatticeState::sampled(n, b, seed),
        })
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.clone()
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.inner.p.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn max_diff(&self, other: &PyLatticeState) -> f64 {
        self.inner.max_diff(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!("LatticeState(x={:?}, p={:?})", self.inner.x, self.inner.p)
    }
}

#[pyclass(name = "TodaConfig", module = "toda_multiform", from_py_object)]
#[derive(Clone)]
pub struct PyTodaConfig {
    inner: toda_core::TodaConfig,
}

#[pymethods]
impl PyTodaConfig {
    #[new]
    #[pyo3(signature = (n, boundary = "open", tol_newton = 1e-12, max_newton_iters = 50))]
    fn new(n: usize, boundary: &str, tol_newton: f64, max_newton_iters: usize) -> PyResult<Self> {
        let b: Boundary = boundary.parse().map_err(to_py)?;
        let inner = toda_core::TodaConfig::new(n, b)
            .and_then(|c| c.with_newton(tol_newton, max_newton_iters))
            .map_err(to_py)?;
        Ok(PyTodaConfig { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn boundary(&self) -> &'static str {
        self.inner.boundary.name()
    }

    fn __repr__(&self) -> String {
        format!(
            "TodaConfig(n={}, boundary={:?})",
            self.inner.n,
            self.inner.boundary.name()
        )
    }
}

fn wrap(inner: LatticeState) -> PyLatticeState {
    PyLatticeState { inner }
}

#[pyfunction]
fn toda_h1(s: &PyLatticeState, cfg: &PyTodaConfig) -> PyResult<f64> {
    continuous::toda_h1(&s.inner, &cfg.inner).map_err(to_py)
}

#[pyfunction]
fn toda_h2(s: &PyLatticeState, cfg: &PyTodaConfig) -> PyResult<f64> {
    continuous::toda_h2(&s.inner, &cfg.inner).map_err(to_py)
}

/// `{H1, H2}` with analytic gradients.
#[pyfunction]
fn poisson_bracket(s: &PyLatticeState, cfg: &PyTodaConfig) -> PyResult<f64> {
    continuous::poisson_bracket(&HamiltonianSystem::toda(&cfg.inner), 1, 2, &s.inner).map_err(to_py)
}

/// Flow of `H_alpha` (1 or 2) for time `t`.
#[pyfunction]
#[pyo3(signature = (s, cfg, alpha, t, step = DEFAULT_STEP))]
fn flow(s: &PyLatticeState, cfg: &PyTodaConfig, alpha: usize, t: f64, step: f64) -> PyResult<PyLatticeState> {
    continuous::flow(&HamiltonianSystem::toda(&cfg.inner), alpha, &s.inner, t, step)
        .map(|r| wrap(r.final_state))
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (s, cfg, t_a, t_b, step = DEFAULT_STEP))]
fn flow_commutator_defect(s: &PyLatticeState, cfg: &PyTodaConfig, t_a: f64, t_b: f64, step: f64) -> PyResult<f64> {
    continuous::flow_commutator_defect(&HamiltonianSystem::toda(&cfg.inner), 1, 2, &s.inner, t_a, t_b, step)
        .map_err(to_py)
}

/// Action of the two-time Toda form along a polyline in `(t1, t2)`.
#[pyfunction]
#[pyo3(signature = (s, cfg, vertices, step = DEFAULT_STEP))]
fn action_along_path(s: &PyLatticeState, cfg: &PyTodaConfig, vertices: Vec<Vec<f64>>, step: f64) -> PyResult<f64> {
    let path = PolylinePath::with_default_quadrature(vertices).map_err(to_py)?;
    let sys = HamiltonianSystem::toda(&cfg.inner);
    continuous::action_along_path(&OneForm::toda(&cfg.inner), &sys, &s.inner, &path, step).map_err(to_py)
}

#[pyfunction]
fn bt_forward(s: &PyLatticeState, lam: f64, cfg: &PyTodaConfig) -> PyResult<PyLatticeState> {
    backlund::bt_forward(&s.inner, param(lam)?, &cfg.inner)
        .map(|r| wrap(r.next))
        .map_err(to_py)
}

#[pyfunction]
fn bt_inverse(s: &PyLatticeState, lam: f64, cfg: &PyTodaConfig) -> PyResult<PyLatticeState> {
    backlund::bt_inverse(&s.inner, param(lam)?, &cfg.inner)
        .map(|r| wrap(r.next))
        .map_err(to_py)
}

#[pyfunction]
fn bt_lagrangian(x: Vec<f64>, xt: Vec<f64>, lam: f64, cfg: &PyTodaConfig) -> PyResult<f64> {
    backlund::bt_lagrangian(&x, &xt, param(lam)?, &cfg.inner).map_err(to_py)
}

#[pyfunction]
fn commutation_defect(s: &PyLatticeState, lam: f64, mu: f64, cfg: &PyTodaConfig) -> PyResult<f64> {
    backlund::commutation_defect(&s.inner, param(lam)?, param(mu)?, &cfg.inner).map_err(to_py)
}

/// `(ell, ell_reduced)`.
#[pyfunction]
fn closure_constant(s: &PyLatticeState, lam: f64, mu: f64, cfg: &PyTodaConfig) -> PyResult<(f64, f64)> {
    backlund::closure_constant(&s.inner, param(lam)?, param(mu)?, &cfg.inner)
        .map(|c| (c.ell, c.ell_reduced))
        .map_err(to_py)
}

/// `dLambda/dlambda` as `(direct, reduced)`.
#[pyfunction]
fn spectrality(s: &PyLatticeState, lam: f64, cfg: &PyTodaConfig) -> PyResult<(f64, f64)> {
    backlund::spectrality_at(&s.inner, param(lam)?, &cfg.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (s, lam, cfg, h_fd = 1e-5))]
fn symplecticity_defect(s: &PyLatticeState, lam: f64, cfg: &PyTodaConfig, h_fd: f64) -> PyResult<f64> {
    backlund::symplecticity_defect(&s.inner, param(lam)?, &cfg.inner, h_fd).map_err(to_py)
}

#[pyfunction]
fn zero_curvature_defect(s: &PyLatticeState, lam: f64, mu: f64, cfg: &PyTodaConfig) -> PyResult<f64> {
    zero_curvature::zero_curvature_defect(&s.inner, param(lam)?, mu, &cfg.inner).map_err(to_py)
}

/// `T(mu)` as nested rows.
#[pyfunction]
fn monodromy(s: &PyLatticeState, mu: f64) -> PyResult<[[f64; 2]; 2]> {
    zero_curvature::monodromy(&s.inner, mu)
        .map(|t| t.to_rows())
        .map_err(to_py)
}

#[pyfunction]
fn product_identity_defect(s: &PyLatticeState, lam: f64, cfg: &PyTodaConfig) -> PyResult<f64> {
    zero_curvature::product_identity_defect(&s.inner, param(lam)?, &cfg.inner).map_err(to_py)
}

/// Runs the invariant suite for a JSON run configuration and returns the
/// JSON report.
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn verify(config_json: &str) -> PyResult<String> {
    let run = RunConfig::from_json(config_json).map_err(to_py)?;
    cmd_verify(&run).map(|r| r.to_json()).map_err(to_py)
}

#[pymodule]
pub fn toda_multiform(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLatticeState>()?;
    m.add_class::<PyTodaConfig>()?;
    m.add("BranchError", m.py().get_type::<BranchError>())?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_function(wrap_pyfunction!(toda_h1, m)?)?;
    m.add_function(wrap_pyfunction!(toda_h2, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(flow_commutator_defect, m)?)?;
    m.add_function(wrap_pyfunction!(action_along_path, m)?)?;
    m.add_function(wrap_pyfunction!(bt_forward, m)?)?;
    m.add_function(wrap_pyfunction!(bt_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(bt_lagrangian, m)?)?;
    m.add_function(wrap_pyfunction!(commutation_defect, m)?)?;
    m.add_function(wrap_pyfunction!(closure_constant, m)?)?;
    m.add_function(wrap_pyfunction!(spectrality, m)?)?;
    m.add_function(wrap_pyfunction!(symplecticity_defect, m)?)?;
    m.add_function(wrap_pyfunction!(zero_curvature_defect, m)?)?;
    m.add_function(wrap_pyfunction!(monodromy, m)?)?;
    m.add_function(wrap_pyfunction!(product_identity_defect, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
