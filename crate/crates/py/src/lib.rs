//! Python module `mgsim`: fields, forcing, the time integrator, symbol
//! audits, distances and snapshot files.

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

use mgsim_core::experiments;
use mgsim_core::io;
use mgsim_core::multipliers::{self, MgSymbol};
use mgsim_core::solver::{self, DtPolicy, ForcingSpec, Integrator, SolverConfig, SolverError};
use mgsim_core::spectral::{Lattice, SpectralField, Transform};

pyo3::create_exception!(mgsim, InstabilityError, pyo3::exceptions::PyRuntimeError);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn solver_err(e: SolverError) -> PyErr {
    match e {
        SolverError::Unstable { .. } => InstabilityError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn io_err(e: io::IoError) -> PyErr {
    match e {
        io::IoError::Missing { .. } | io::IoError::Io(_) => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn lattice(dims: [usize; 3]) -> PyResult<Lattice> {
    Lattice::new(dims).map_err(value_err)
}

/// Mean-zero real scalar field stored by its normalised Fourier coefficients.
#[pyclass(name = "Field", module = "mgsim", from_py_object)]
#[derive(Clone)]
pub struct PyField {
    inner: SpectralField,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn zeros(dims: [usize; 3]) -> PyResult<Self> {
        Ok(Self {
            inner: SpectralField::zeros(lattice(dims)?),
        })
    }

    /// Seeded random gauge-respecting field on `|k|∞ ≤ band` with the given
    /// `L²` norm.
    #[staticmethod]
    #[pyo3(signature = (dims, seed, band, l2_norm = 1.0))]
    fn random(dims: [usize; 3], seed: u64, band: i64, l2_norm: f64) -> PyResult<Self> {
        Ok(Self {
            inner: solver::random_initial_data(lattice(dims)?, seed, band, l2_norm),
        })
    }

    /// `c e^{ik·x} + conj(c) e^{−ik·x}`.
    #[staticmethod]
    fn mode_pair(dims: [usize; 3], k: [i64; 3], c: Complex64) -> PyResult<Self> {
        Ok(Self {
            inner: SpectralField::mode_pair(lattice(dims)?, k, c).map_err(value_err)?,
        })
    }

    /// Builds a field from grid samples (row-major, last axis fastest).
    #[staticmethod]
    fn from_physical(dims: [usize; 3], samples: Vec<f64>) -> PyResult<Self> {
        let mut t = Transform::new(lattice(dims)?);
        Ok(Self {
            inner: t.forward(&samples).map_err(value_err)?,
        })
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.lattice().dims()
    }

    fn get(&self, k: [i64; 3]) -> PyResult<Complex64> {
        if !self.inner.lattice().contains(k) {
            return Err(PyIndexError::new_err(format!("{k:?} is outside the lattice")));
        }
        Ok(self.inner.get(k))
    }

    fn coeffs(&self) -> Vec<Complex64> {
        self.inner.coeffs().to_vec()
    }

    fn to_physical(&self) -> PyResult<Vec<f64>> {
        Transform::new(self.inner.lattice()).inverse(&self.inner).map_err(value_err)
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    fn sobolev_norm(&self, s: f64) -> PyResult<f64> {
        self.inner.sobolev_norm(s).map_err(value_err)
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    fn hermitian_defect(&self) -> f64 {
        self.inner.hermitian_defect()
    }

    fn gauge_violation(&self) -> f64 {
        self.inner.gauge_violation()
    }

    /// Velocity `u = M^ν[θ]` as three fields.
    fn velocity(&self, nu: f64) -> PyResult<Vec<PyField>> {
        Ok(multipliers::apply_velocity(&self.inner, nu)
            .map_err(value_err)?
            .into_iter()
            .map(|inner| PyField { inner })
            .collect())
    }

    fn __sub__(&self, other: &PyField) -> PyResult<PyField> {
        Ok(PyField {
            inner: self.inner.difference(&other.inner).map_err(value_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Field(dims={:?}, l2_norm={:e})", self.dims(), self.l2_norm())
    }
}

/// Forcing `S` as a list of `(k, c)` pairs, closed under `k ↦ −k`.
#[pyclass(name = "Forcing", module = "mgsim", from_py_object)]
#[derive(Clone)]
pub struct PyForcing {
    inner: ForcingSpec,
}

#[pymethods]
impl PyForcing {
    #[new]
    #[pyo3(signature = (modes = Vec::new()))]
    fn new(modes: Vec<([i64; 3], Complex64)>) -> PyResult<Self> {
        Ok(Self {
            inner: ForcingSpec::new(modes).map_err(solver_err)?,
        })
    }

    #[staticmethod]
    fn random(seed: u64, band: i64, l2_norm: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ForcingSpec::random_band(seed, band, l2_norm).map_err(solver_err)?,
        })
    }

    fn modes(&self) -> Vec<([i64; 3], Complex64)> {
        self.inner.modes().to_vec()
    }

    fn to_field(&self, dims: [usize; 3]) -> PyResult<PyField> {
        Ok(PyField {
            inner: self.inner.to_field(lattice(dims)?).map_err(solver_err)?,
        })
    }
}

/// Output of `Simulator.run`.
#[pyclass(name = "Trajectory", module = "mgsim")]
pub struct PyTrajectory {
    inner: solver::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.snapshots.iter().map(|s| s.t).collect()
    }

    fn snapshot(&self, i: usize) -> PyResult<PyField> {
        self.inner
            .snapshots
            .get(i)
            .map(|s| PyField { inner: s.theta.clone() })
            .ok_or_else(|| PyIndexError::new_err(format!("snapshot {i} out of range")))
    }

    fn final_field(&self) -> PyField {
        PyField {
            inner: self.inner.final_snapshot().theta.clone(),
        }
    }

    /// Rows `(t, energy, dissipation, injection, residual)`.
    fn ledger(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        self.inner
            .ledger
            .rows()
            .iter()
            .map(|r| (r.t, r.energy, r.dissipation, r.injection, r.residual))
            .collect()
    }

    #[getter]
    fn max_relative_residual(&self) -> f64 {
        self.inner.ledger.max_relative_residual()
    }

    #[getter]
    fn max_skew_defect(&self) -> f64 {
        self.inner.max_skew_defect
    }

    #[getter]
    fn max_tail_fraction(&self) -> f64 {
        self.inner.max_tail_fraction
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.dt_history.len()
    }
}

/// Pseudo-spectral integrator. With `dt` set the step is fixed, otherwise
/// CFL-adaptive.
#[pyclass(name = "Simulator", module = "mgsim")]
pub struct PySimulator {
    config: SolverConfig,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (dims, kappa, nu, t_end, snapshot_every, dt = None, c_cfl = 0.5, dt_max = 1e-2, integrator = "etd-rk2"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dims: [usize; 3],
        kappa: f64,
        nu: f64,
        t_end: f64,
        snapshot_every: f64,
        dt: Option<f64>,
        c_cfl: f64,
        dt_max: f64,
        integrator: &str,
    ) -> PyResult<Self> {
        let mut config = SolverConfig::new(lattice(dims)?, kappa, nu);
        config.t_end = t_end;
        config.snapshot_every = snapshot_every;
        config.dt_policy = match dt {
            Some(dt) => DtPolicy::Fixed(dt),
            None => DtPolicy::Cfl { c_cfl, dt_max },
        };
        config.integrator = match integrator {
            "etd-rk2" => Integrator::EtdRk2,
            "imex-euler" => Integrator::ImexEuler,
            other => return Err(value_err(format!("unknown integrator {other:?}"))),
        };
        config.validate().map_err(solver_err)?;
        Ok(Self { config })
    }

    /// Integrates from `theta0`; raises `InstabilityError` on blow-up.
    fn run(&self, py: Python<'_>, theta0: &PyField, forcing: &PyForcing) -> PyResult<PyTrajectory> {
        let config = self.config.clone();
        let theta0 = theta0.inner.clone();
        let forcing = forcing.inner.clone();
        let traj = py.detach(move || -> Result<_, SolverError> {
            let mut s = solver::Solver::new(config, &forcing)?;
            s.integrate(theta0).map_err(|e| e.source)
        });
        Ok(PyTrajectory {
            inner: traj.map_err(solver_err)?,
        })
    }
}

/// `(M̂₁, M̂₂, M̂₃)` at `k`; zero on `k₃ = 0`.
#[pyfunction]
fn velocity_symbol(nu: f64, k: [i64; 3]) -> PyResult<[f64; 3]> {
    let s = MgSymbol::new(nu).map_err(value_err)?;
    Ok(s.value(k))
}

#[pyfunction]
fn audit_divergence_free(nu: f64, window: i64) -> PyResult<f64> {
    multipliers::audit_divergence_free(nu, window).map_err(value_err)
}

/// Per-component `max |M̂^ν_j(k)|/|k|` over the grid and window.
#[pyfunction]
fn audit_uniform_bound(nu_grid: Vec<f64>, window: i64) -> PyResult<[f64; 3]> {
    Ok(multipliers::audit_uniform_bound(&nu_grid, window)
        .map_err(value_err)?
        .per_component)
}

/// `(empirical component-1 sup, analytic bound)` over `0 < |k| ≤ radius`.
#[pyfunction]
fn audit_symbol_convergence(nu: f64, radius: i64) -> PyResult<(f64, f64)> {
    let a = multipliers::audit_symbol_convergence(nu, radius).map_err(value_err)?;
    Ok((a.empirical_component1, a.analytic_bound))
}

#[pyfunction]
fn strong_distance(a: &PyField, b: &PyField) -> PyResult<f64> {
    experiments::strong_distance(&a.inner, &b.inner).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (a, b, window = 8))]
fn weak_distance(a: &PyField, b: &PyField, window: i64) -> PyResult<f64> {
    experiments::weak_distance(&a.inner, &b.inner, window).map_err(value_err)
}

#[pyfunction]
fn absorbing_radius(forcing: &PyForcing, dims: [usize; 3], kappa: f64, margin: f64) -> PyResult<f64> {
    let s = forcing.inner.to_field(lattice(dims)?).map_err(solver_err)?;
    Ok(experiments::absorbing_radius(&s, kappa, margin))
}

#[pyfunction]
#[pyo3(signature = (path, field, t = 0.0, nu = 0.0, kappa = 1.0))]
fn write_snapshot(path: std::path::PathBuf, field: &PyField, t: f64, nu: f64, kappa: f64) -> PyResult<()> {
    let snap = io::SnapshotFile {
        t,
        nu,
        kappa,
        theta: field.inner.clone(),
    };
    io::write_snapshot(path, &snap).map_err(io_err)
}

/// Returns `(field, t, nu, kappa)`.
#[pyfunction]
fn read_snapshot(path: std::path::PathBuf) -> PyResult<(PyField, f64, f64, f64)> {
    let s = io::read_snapshot(path).map_err(io_err)?;
    Ok((PyField { inner: s.theta }, s.t, s.nu, s.kappa))
}

/// Validates a run configuration and returns it with defaults filled in.
#[pyfunction]
fn resolve_config(path: std::path::PathBuf) -> PyResult<String> {
    Ok(io::parse_config(path).map_err(io_err)?.to_toml())
}

#[pymodule]
pub fn mgsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyForcing>()?;
    m.add_class::<PySimulator>()?;
    m.add_class::<PyTrajectory>()?;
    m.add("InstabilityError", m.py().get_type::<InstabilityError>())?;
    m.add_function(wrap_pyfunction!(velocity_symbol, m)?)?;
    m.add_function(wrap_pyfunction!(audit_divergence_free, m)?)?;
    m.add_function(wrap_pyfunction!(audit_uniform_bound, m)?)?;
    m.add_function(wrap_pyfunction!(audit_symbol_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(strong_distance, m)?)?;
    m.add_function(wrap_pyfunction!(weak_distance, m)?)?;
    m.add_function(wrap_pyfunction!(absorbing_radius, m)?)?;
    m.add_function(wrap_pyfunction!(write_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(read_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    Ok(())
}
