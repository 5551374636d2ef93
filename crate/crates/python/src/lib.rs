//! Python bindings for the radial point-source solver.
//!
//! Exposes the problem description, the mesh, and the main operations
//! (minimal solve, threshold scan, stability, mountain pass, verification)
//! as plain classes returning dict-like report objects.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dirac_elliptic as core;
use dirac_elliptic::problem::ValidationMode;

fn to_py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::ValidationFailed { .. }
        | core::Error::Config(_)
        | core::Error::InvalidDimension(_)
        | core::Error::InvalidGrid(_)
        | core::Error::NonPositiveRadius(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Problem data (N, p, k, a0, a_inf, c1) plus the potential choice.
#[pyclass(name = "ProblemSpec")]
#[derive(Clone)]
struct PyProblemSpec {
    inner: core::ProblemSpec,
}

#[pymethods]
impl PyProblemSpec {
    #[new]
    #[pyo3(signature = (n=3, p=2.0, k=1.0, a0=0.0, a_inf=4.0, c1=1.0, potential_factor=None))]
    fn new(
        n: u32,
        p: f64,
        k: f64,
        a0: f64,
        a_inf: f64,
        c1: f64,
        potential_factor: Option<f64>,
    ) -> PyResult<Self> {
        let mut spec = core::ProblemSpec::new(n, p, k, a0, a_inf, c1);
        if let Some(factor) = potential_factor {
            spec = spec.with_potential(core::Potential::ScaledV0 { factor });
        }
        spec.check_basic().map_err(to_py_err)?;
        Ok(Self { inner: spec })
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    #[setter]
    fn set_k(&mut self, k: f64) {
        self.inner.k = k;
    }

    fn potential_v0(&self, r: f64) -> PyResult<f64> {
        core::potential_v0(r, &self.inner).map_err(to_py_err)
    }

    fn validate(&self, mode: &str) -> PyResult<()> {
        let mode = match mode {
            "minimal" => ValidationMode::Minimal,
            "mountain-pass-radial" => ValidationMode::MountainPassRadial,
            other => return Err(PyValueError::new_err(format!("unknown mode: {other}"))),
        };
        core::validate_exponents(&self.inner, mode).map(|_| ()).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ProblemSpec(n={}, p={}, k={}, a0={}, a_inf={}, c1={})",
            self.inner.n, self.inner.p, self.inner.k, self.inner.a0, self.inner.a_inf,
            self.inner.c1
        )
    }
}

/// Log-spaced radial mesh with product quadrature weights.
#[pyclass(name = "RadialGrid")]
#[derive(Clone)]
struct PyRadialGrid {
    inner: Arc<core::RadialGrid>,
}

#[pymethods]
impl PyRadialGrid {
    #[new]
    #[pyo3(signature = (r_min=1e-6, r_max=1e6, nodes=4096, dim=3))]
    fn new(r_min: f64, r_max: f64, nodes: usize, dim: u32) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(core::RadialGrid::new(r_min, r_max, nodes, dim).map_err(to_py_err)?) })
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        self.inner.id()
    }
}

/// Sampled radial function; values follow the stated representation.
#[pyclass(name = "RadialField")]
#[derive(Clone)]
struct PyRadialField {
    inner: core::RadialField,
}

#[pymethods]
impl PyRadialField {
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn radii(&self) -> Vec<f64> {
        self.inner.grid().nodes().to_vec()
    }

    #[getter]
    fn representation(&self) -> &'static str {
        self.inner.representation().as_str()
    }

    fn raw_values(&self) -> Vec<f64> {
        self.inner.to_raw()
    }

    fn scaled_values(&self) -> Vec<f64> {
        self.inner.to_scaled()
    }

    fn to_csv(&self) -> String {
        core::io::field_to_csv(&self.inner)
    }
}

#[pyfunction]
fn newton_constant(n: u32) -> PyResult<f64> {
    core::newton_constant(n).map_err(to_py_err)
}

#[pyfunction]
fn green_apply(field: &PyRadialField, spec: &PyProblemSpec) -> PyResult<PyRadialField> {
    core::green_apply(&field.inner, &spec.inner).map(|inner| PyRadialField { inner }).map_err(to_py_err)
}

#[pyfunction]
fn fundamental_solution(spec: &PyProblemSpec, grid: &PyRadialGrid) -> PyResult<PyRadialField> {
    core::fundamental_solution(&spec.inner, &grid.inner)
        .map(|inner| PyRadialField { inner })
        .map_err(to_py_err)
}

#[pyfunction]
fn sample_field(grid: &PyRadialGrid, values: Vec<f64>, representation: &str) -> PyResult<PyRadialField> {
    let repr = match representation {
        "raw" => core::Representation::Raw,
        "scaled" => core::Representation::Scaled,
        other => return Err(PyValueError::new_err(format!("unknown representation: {other}"))),
    };
    core::RadialField::new(grid.inner.clone(), values, repr)
        .map(|inner| PyRadialField { inner })
        .map_err(to_py_err)
}

#[pyfunction]
fn estimate_barrier<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    grid: &PyRadialGrid,
) -> PyResult<Bound<'py, PyDict>> {
    let b = core::estimate_c2(&spec.inner, &grid.inner).map_err(to_py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("c2", b.c2)?;
    d.set_item("kp", b.kp)?;
    d.set_item("tp", b.tp)?;
    d.set_item("maximizer_radius", b.maximizer_radius)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (spec, grid, max_iter=500, tol=1e-10))]
fn solve_minimal<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    grid: &PyRadialGrid,
    max_iter: usize,
    tol: f64,
) -> PyResult<(Bound<'py, PyDict>, Option<PyRadialField>)> {
    let v = core::validate_exponents(&spec.inner, ValidationMode::Minimal).map_err(to_py_err)?;
    let rep = core::iterate_minimal(&v, &grid.inner, max_iter, tol).map_err(to_py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("verdict", format!("{:?}", rep.verdict).to_lowercase())?;
    d.set_item("steps", rep.steps)?;
    d.set_item("barrier_ok", rep.barrier_ok)?;
    d.set_item("monotone_ok", rep.monotone_ok)?;
    d.set_item("deltas", rep.deltas.clone())?;
    let solution = rep.solution.map(|inner| PyRadialField { inner });
    Ok((d, solution))
}

#[pyfunction]
#[pyo3(signature = (spec, grid, k_seed=None, rel_tol=0.01, probe_max_iter=500, cap_factor=1e6))]
fn bisect_kstar<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    grid: &PyRadialGrid,
    k_seed: Option<f64>,
    rel_tol: f64,
    probe_max_iter: usize,
    cap_factor: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let v = core::validate_exponents(&spec.inner, ValidationMode::Minimal).map_err(to_py_err)?;
    let b = core::estimate_c2(&spec.inner, &grid.inner).map_err(to_py_err)?;
    let seed = k_seed.unwrap_or(if b.kp.is_finite() { b.kp } else { spec.inner.k });
    let est = core::bisect_kstar(&v, &grid.inner, seed, rel_tol, probe_max_iter, cap_factor)
        .map_err(to_py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("k_lo", est.k_lo)?;
    d.set_item("k_hi", est.k_hi)?;
    d.set_item("open_above", est.open_above)?;
    d.set_item("kp", est.kp)?;
    d.set_item("k_lo_at_least_kp", est.k_lo_at_least_kp)?;
    d.set_item("grid_id", est.grid_id.clone())?;
    Ok(d)
}

#[pyfunction]
fn stability<'py>(
    py: Python<'py>,
    u: &PyRadialField,
    spec: &PyProblemSpec,
    grid: &PyRadialGrid,
) -> PyResult<(Bound<'py, PyDict>, Option<PyRadialField>)> {
    let forms = core::assemble_forms(&u.inner, &spec.inner, &grid.inner).map_err(to_py_err)?;
    let rep = core::lambda1(&forms).map_err(to_py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("lambda1", rep.lambda1)?;
    d.set_item("stable", rep.stable)?;
    d.set_item("semi_stable", rep.semi_stable)?;
    d.set_item("margin", rep.margin)?;
    let xi = rep.eigenfunction.map(|inner| PyRadialField { inner });
    Ok((d, xi))
}

#[pyfunction]
#[pyo3(signature = (u, spec, grid, path_size=41, max_deform=400, grad_tol=1e-6, seed=42))]
#[allow(clippy::too_many_arguments)]
fn mountain_pass<'py>(
    py: Python<'py>,
    u: &PyRadialField,
    spec: &PyProblemSpec,
    grid: &PyRadialGrid,
    path_size: usize,
    max_deform: usize,
    grad_tol: f64,
    seed: u64,
) -> PyResult<(Bound<'py, PyDict>, PyRadialField, PyRadialField)> {
    let ctx = core::EnergyContext::new(&u.inner, &spec.inner, &grid.inner).map_err(to_py_err)?;
    let forms = core::assemble_forms(&u.inner, &spec.inner, &grid.inner).map_err(to_py_err)?;
    let eig = core::lambda1(&forms).map_err(to_py_err)?;
    let dir = eig
        .eigenfunction
        .ok_or_else(|| PyRuntimeError::new_err("no eigen direction available"))?
        .values()
        .to_vec();
    let opts = core::MountainPassOptions {
        path_size,
        max_deform,
        grad_tol,
        seed,
        ..Default::default()
    };
    let rep = core::mountain_pass(&ctx, &dir, &opts).map_err(to_py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("level_c", rep.level_c)?;
    d.set_item("beta_floor", rep.beta_floor)?;
    d.set_item("t0", rep.t0)?;
    d.set_item("grad_norm", rep.grad_norm)?;
    d.set_item("converged", rep.converged)?;
    d.set_item("deform_rounds", rep.deform_rounds)?;
    d.set_item("clamp_size", rep.clamp_size)?;
    Ok((d, PyRadialField { inner: rep.v_k }, PyRadialField { inner: rep.second_solution }))
}

#[pyfunction]
fn verify_solution<'py>(
    py: Python<'py>,
    u: &PyRadialField,
    spec: &PyProblemSpec,
    grid: &PyRadialGrid,
) -> PyResult<Bound<'py, PyDict>> {
    let tol = core::verify::VerifyTolerances::default();
    let rep = core::verify::verify_solution(&u.inner, &spec.inner, &grid.inner, &tol)
        .map_err(to_py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("residual_sup", rep.residual_sup)?;
    d.set_item("residual_pass", rep.residual_pass)?;
    d.set_item("weak_residuals", rep.weak_residuals.clone())?;
    d.set_item("weak_pass", rep.weak_pass)?;
    d.set_item("singular_coeff", rep.singular_coeff)?;
    d.set_item("singular_target", rep.singular_target)?;
    d.set_item("singular_pass", rep.singular_pass)?;
    d.set_item("decay_sup", rep.decay_sup)?;
    Ok(d)
}

#[pymodule]
fn dirac_elliptic_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblemSpec>()?;
    m.add_class::<PyRadialGrid>()?;
    m.add_class::<PyRadialField>()?;
    m.add_function(wrap_pyfunction!(newton_constant, m)?)?;
    m.add_function(wrap_pyfunction!(green_apply, m)?)?;
    m.add_function(wrap_pyfunction!(fundamental_solution, m)?)?;
    m.add_function(wrap_pyfunction!(sample_field, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_barrier, m)?)?;
    m.add_function(wrap_pyfunction!(solve_minimal, m)?)?;
    m.add_function(wrap_pyfunction!(bisect_kstar, m)?)?;
    m.add_function(wrap_pyfunction!(stability, m)?)?;
    m.add_function(wrap_pyfunction!(mountain_pass, m)?)?;
    m.add_function(wrap_pyfunction!(verify_solution, m)?)?;
    Ok(())
}
