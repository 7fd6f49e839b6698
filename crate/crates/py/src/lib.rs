//! Python bindings exposing the main types and operations.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use zerodyn::blocklin::{decompose, null_basis};
use zerodyn::geomdiff::{involutivity_check, relative_degree};
use zerodyn::model::{drift, dynamics, input_columns};
use zerodyn::normalform::{eta_dot, normal_coordinates, zero_dynamics_rhs};
use zerodyn::registry;
use zerodyn::sampling::rng_from_seed;
use zerodyn::sim::{
    linearizing_torque, simulate, zero_dynamics_compare, ControlPolicy, IntegratorConfig,
};

fn err(e: zerodyn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vec_of(m: &DVector<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

type TrajectoryTuple = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>);
type MatrixPair = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// A registered system model with the core analysis operations.
#[pyclass]
struct Model {
    inner: zerodyn::SystemModel,
}

impl Model {
    fn state(&self, x: Vec<f64>) -> PyResult<zerodyn::StateVector> {
        self.inner
            .state(DVector::from_column_slice(&x))
            .map_err(err)
    }
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (name, params_json = None))]
    fn new(name: &str, params_json: Option<&str>) -> PyResult<Self> {
        let params = match params_json {
            Some(text) => Some(
                serde_json::from_str::<serde_json::Value>(text)
                    .map_err(|e| PyValueError::new_err(format!("bad params JSON: {e}")))?,
            ),
            None => None,
        };
        let inner = registry::build_model(name, params.as_ref()).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.dims().n()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.dims().p()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.dims().s()
    }

    /// Unforced state derivative at `x`.
    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let st = self.state(x)?;
        Ok(vec_of(&drift(&self.inner, &st).map_err(err)?))
    }

    /// Input map columns at `x` (n x p, row-major nested lists).
    fn input_columns(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let st = self.state(x)?;
        Ok(rows_of(&input_columns(&self.inner, &st).map_err(err)?))
    }

    /// Full state derivative under input `tau`.
    fn dynamics(&self, x: Vec<f64>, tau: Vec<f64>) -> PyResult<Vec<f64>> {
        let st = self.state(x)?;
        let tau = DVector::from_column_slice(&tau);
        Ok(vec_of(&dynamics(&self.inner, &st, &tau).map_err(err)?))
    }

    /// Normal coordinates (zeta, eta) at `x`.
    fn normal_coordinates(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let st = self.state(x)?;
        let ns = normal_coordinates(&self.inner, &st).map_err(err)?;
        Ok((vec_of(&ns.zeta), vec_of(&ns.eta)))
    }

    /// Null-space basis (N, X) of the transposed input map at `x`.
    fn null_basis(&self, x: Vec<f64>) -> PyResult<MatrixPair> {
        let st = self.state(x)?;
        let m = self.inner.mass_at(&st.beta()).map_err(err)?;
        let d = decompose(&m, self.inner.dims().p()).map_err(err)?;
        let nb = null_basis(&d).map_err(err)?;
        Ok((rows_of(&nb.n), rows_of(&nb.x)))
    }

    /// Internal-coordinate rate at `x`; independent of `tau` by construction.
    fn eta_dot(&self, x: Vec<f64>, tau: Vec<f64>) -> PyResult<Vec<f64>> {
        let st = self.state(x)?;
        let tau = DVector::from_column_slice(&tau);
        Ok(vec_of(&eta_dot(&self.inner, &st, &tau).map_err(err)?.eta_dot))
    }

    /// Zero-dynamics right-hand side at internal state `eta`.
    fn zero_dynamics_rhs(&self, eta: Vec<f64>) -> PyResult<Vec<f64>> {
        let eta = DVector::from_column_slice(&eta);
        Ok(vec_of(&zero_dynamics_rhs(&self.inner, &eta).map_err(err)?))
    }

    /// Feedback-linearizing input for commanded output acceleration `v`.
    fn linearizing_torque(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        let st = self.state(x)?;
        let v = DVector::from_column_slice(&v);
        Ok(vec_of(&linearizing_torque(&self.inner, &st, &v).map_err(err)?))
    }

    /// Integrate the closed loop under linearizing control with constant `v`.
    /// Returns (times, states, inputs, etas) as nested lists.
    #[pyo3(signature = (x0, v, step = 1e-3, horizon = 1.0))]
    fn simulate(
        &self,
        x0: Vec<f64>,
        v: Vec<f64>,
        step: f64,
        horizon: f64,
    ) -> PyResult<TrajectoryTuple> {
        let cfg = IntegratorConfig::new(step, horizon).map_err(err)?;
        let policy = ControlPolicy::linearizing_constant(DVector::from_column_slice(&v));
        let traj = simulate(
            &self.inner,
            &DVector::from_column_slice(&x0),
            &policy,
            &cfg,
        )
        .map_err(err)?;
        Ok((
            traj.times.clone(),
            traj.states.iter().map(|s| vec_of(s.as_vector())).collect(),
            traj.inputs.iter().map(vec_of).collect(),
            traj.normal_states.iter().map(|ns| vec_of(&ns.eta)).collect(),
        ))
    }

    /// Sup-norm gap between the reduced zero dynamics from `eta0` and the
    /// constrained full simulation.
    #[pyo3(signature = (eta0, step = 1e-3, horizon = 1.0))]
    fn zero_dynamics_compare(&self, eta0: Vec<f64>, step: f64, horizon: f64) -> PyResult<f64> {
        let cfg = IntegratorConfig::new(step, horizon).map_err(err)?;
        let cmp = zero_dynamics_compare(&self.inner, &DVector::from_column_slice(&eta0), &cfg)
            .map_err(err)?;
        Ok(cmp.max_deviation)
    }

    /// Check closure of the input distribution under Lie brackets at seeded
    /// random states. Returns (involutive, worst_rank_excess).
    #[pyo3(signature = (samples = 50, seed = 42))]
    fn involutive(&self, samples: usize, seed: u64) -> PyResult<(bool, usize)> {
        let mut rng = rng_from_seed(seed);
        let pts: Vec<DVector<f64>> = (0..samples)
            .map(|_| self.inner.sample_box().sample(&mut rng))
            .collect();
        let report = involutivity_check(&self.inner, &pts).map_err(err)?;
        Ok((report.involutive, report.worst_rank_excess))
    }

    /// Per-output relative degrees at the sampling-box center.
    /// Returns (r_i, total, well_defined).
    fn relative_degrees(&self) -> PyResult<(Vec<usize>, usize, bool)> {
        let probe = self.inner.sample_box().center();
        let rd = relative_degree(&self.inner, &probe, self.inner.dims().n()).map_err(err)?;
        Ok((rd.r_i, rd.total, rd.well_defined))
    }
}

/// Names accepted by `Model(...)`.
#[pyfunction]
fn model_names() -> Vec<String> {
    registry::MODEL_NAMES.iter().map(|s| s.to_string()).collect()
}

#[pymodule]
fn zerodyn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(model_names, m)?)?;
    Ok(())
}
