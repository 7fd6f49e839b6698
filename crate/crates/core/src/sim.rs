//! Fixed-step integration, the linearizing control law, and trajectory-level
//! cross-validation of the closed-form internal dynamics against brute-force
//! simulation.
//!
//! Only classical fixed-step RK4 is provided: runs are deterministic and the
//! problem sizes are desk scale. Control policies are evaluated at the
//! integration state at every RK4 stage, not held over the step.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::blocklin::condition_estimate;
use crate::error::{Error, Result, SINGULARITY_LIMIT};
use crate::model::{drift, dynamics, input_columns, StateVector, SystemModel};
use crate::normalform::{normal_coordinates, zero_dynamics_rhs, NormalState};

/// Hard cap on the number of integration steps.
pub const MAX_STEPS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
}

/// Step size, horizon, and scheme for one integration run.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub step: f64,
    pub horizon: f64,
    pub method: Method,
}

impl IntegratorConfig {
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        if step <= 0.0 || !step.is_finite() {
            return Err(Error::Config("step must be positive".into()));
        }
        if horizon < step {
            return Err(Error::Config("horizon must be at least one step".into()));
        }
        if horizon / step > MAX_STEPS {
            return Err(Error::Config(format!(
                "horizon/step = {:.3e} exceeds the {MAX_STEPS:.0e} step guard",
                horizon / step
            )));
        }
        Ok(Self {
            step,
            horizon,
            method: Method::Rk4,
        })
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }
}

/// One classical 4-stage Runge-Kutta update of `x' = rhs(t, x)`.
pub fn rk4_step<F>(rhs: &F, t: f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(t, x)?;
    let k2 = rhs(t + 0.5 * h, &(x + 0.5 * h * &k1))?;
    let k3 = rhs(t + 0.5 * h, &(x + 0.5 * h * &k2))?;
    let k4 = rhs(t + h, &(x + h * &k3))?;
    Ok(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Control policy for [`simulate`]: either a prescribed input history or the
/// linearizing law driven by a commanded output acceleration `v(t)`.
#[derive(Clone)]
pub enum ControlPolicy {
    OpenLoop(Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>),
    Linearizing(Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>),
}

impl ControlPolicy {
    pub fn open_loop_constant(tau: DVector<f64>) -> Self {
        ControlPolicy::OpenLoop(Arc::new(move |_t| tau.clone()))
    }

    pub fn linearizing_constant(v: DVector<f64>) -> Self {
        ControlPolicy::Linearizing(Arc::new(move |_t| v.clone()))
    }

    fn torque(&self, model: &SystemModel, t: f64, x: &StateVector) -> Result<DVector<f64>> {
        match self {
            ControlPolicy::OpenLoop(tau) => Ok(tau(t)),
            ControlPolicy::Linearizing(v) => linearizing_torque(model, x, &v(t)),
        }
    }
}

/// Feedback-linearizing input `tau = G_top^-1 (-f_top + v)` built from the
/// first `p` rows of the drift and input map. Renders the actuated-block
/// dynamics exactly `v`.
pub fn linearizing_torque(
    model: &SystemModel,
    x: &StateVector,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = model.dims().p();
    if v.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: v.len(),
        });
    }
    let f = drift(model, x)?;
    let g = input_columns(model, x)?;
    let g_top: DMatrix<f64> = g.view((0, 0), (p, p)).into();
    let cond = condition_estimate(&g_top);
    if !cond.is_finite() || cond > SINGULARITY_LIMIT {
        return Err(Error::SingularDecoupling { cond });
    }
    let f_top: DVector<f64> = f.rows(0, p).into();
    g_top
        .lu()
        .solve(&(v - f_top))
        .ok_or(Error::SingularDecoupling { cond })
}

/// Time-indexed record of a simulation run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub inputs: Vec<DVector<f64>>,
    pub normal_states: Vec<NormalState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV export with header
    /// `t,x_0..x_{n-1},tau_0..tau_{p-1},zeta_0..zeta_{p-1},eta_0..eta_{n-p-1}`,
    /// 17 significant digits, one row per step, UNIX line endings.
    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        let (n, p, q) = match self.states.first() {
            Some(s) => (
                s.as_vector().len(),
                s.p(),
                s.as_vector().len() - s.p(),
            ),
            None => return Ok(()),
        };
        let mut header = String::from("t");
        for i in 0..n {
            header.push_str(&format!(",x_{i}"));
        }
        for i in 0..p {
            header.push_str(&format!(",tau_{i}"));
        }
        for i in 0..p {
            header.push_str(&format!(",zeta_{i}"));
        }
        for i in 0..q {
            header.push_str(&format!(",eta_{i}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut row = format!("{:.16e}", self.times[k]);
            for v in self.states[k].as_vector().iter() {
                row.push_str(&format!(",{v:.16e}"));
            }
            for v in self.inputs[k].iter() {
                row.push_str(&format!(",{v:.16e}"));
            }
            for v in self.normal_states[k].zeta.iter() {
                row.push_str(&format!(",{v:.16e}"));
            }
            for v in self.normal_states[k].eta.iter() {
                row.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

fn abort_at(t: f64, e: Error) -> Error {
    match e {
        e @ Error::IntegrationAbort { .. } => e,
        other => Error::IntegrationAbort {
            t,
            source: Box::new(other),
        },
    }
}

/// Integrate the closed loop from `x0`, recording states, applied inputs, and
/// derived normal coordinates at every step.
pub fn simulate(
    model: &SystemModel,
    x0: &DVector<f64>,
    policy: &ControlPolicy,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let steps = cfg.steps();
    let h = cfg.step;
    let rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let state = model.state(y.clone())?;
        let tau = policy.torque(model, t, &state)?;
        dynamics(model, &state, &tau)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut normal_states = Vec::with_capacity(steps + 1);

    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * h;
        let state = model.state(x.clone()).map_err(|e| abort_at(t, e))?;
        let tau = policy
            .torque(model, t, &state)
            .map_err(|e| abort_at(t, e))?;
        let ns = normal_coordinates(model, &state).map_err(|e| abort_at(t, e))?;
        times.push(t);
        inputs.push(tau);
        normal_states.push(ns);
        states.push(state);
        if k < steps {
            x = rk4_step(&rhs, t, &x, h).map_err(|e| abort_at(t, e))?;
        }
    }
    Ok(Trajectory {
        times,
        states,
        inputs,
        normal_states,
    })
}

/// Result of integrating the closed-form zero dynamics against the full
/// system constrained to the output-zeroing manifold.
#[derive(Debug, Clone)]
pub struct ZeroDynamicsComparison {
    pub times: Vec<f64>,
    /// Internal trajectory from the reduced closed-form equation.
    pub closed_form: Vec<DVector<f64>>,
    /// Internal trajectory of the full simulation mapped through the
    /// coordinate change.
    pub simulated: Vec<DVector<f64>>,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
}

/// Integrate (A) the reduced zero dynamics from `eta0` and (B) the full
/// system from `x0 = (0, eta0)` under linearizing control with `v = 0`, then
/// compare the two internal trajectories in the sup norm.
pub fn zero_dynamics_compare(
    model: &SystemModel,
    eta0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<ZeroDynamicsComparison> {
    let dims = model.dims();
    if eta0.len() != dims.n_beta() {
        return Err(Error::DimensionMismatch {
            expected: dims.n_beta(),
            got: eta0.len(),
        });
    }
    let steps = cfg.steps();
    let h = cfg.step;

    // (A) reduced equation
    let reduced_rhs =
        |_t: f64, eta: &DVector<f64>| -> Result<DVector<f64>> { zero_dynamics_rhs(model, eta) };
    let mut closed_form = Vec::with_capacity(steps + 1);
    let mut eta = eta0.clone();
    for k in 0..=steps {
        closed_form.push(eta.clone());
        if k < steps {
            let t = k as f64 * h;
            eta = rk4_step(&reduced_rhs, t, &eta, h).map_err(|e| abort_at(t, e))?;
        }
    }

    // (B) full system on the manifold
    let mut x0 = DVector::zeros(dims.n());
    x0.rows_mut(dims.p(), dims.n_beta()).copy_from(eta0);
    let policy = ControlPolicy::linearizing_constant(DVector::zeros(dims.p()));
    let traj = simulate(model, &x0, &policy, cfg)?;
    let simulated: Vec<DVector<f64>> =
        traj.normal_states.iter().map(|ns| ns.eta.clone()).collect();

    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
    let deviations: Vec<f64> = closed_form
        .iter()
        .zip(&simulated)
        .map(|(a, b)| (a - b).amax())
        .collect();
    let max_deviation = deviations.iter().fold(0.0_f64, |acc, d| acc.max(*d));
    Ok(ZeroDynamicsComparison {
        times,
        closed_form,
        simulated,
        deviations,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;

    #[test]
    fn rk4_fixed_point() {
        let rhs = |_t: f64, _x: &DVector<f64>| Ok(DVector::zeros(2));
        let x = DVector::from_column_slice(&[1.0, -2.0]);
        let y = rk4_step(&rhs, 0.0, &x, 0.1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rk4_exponential_truncation() {
        // x' = x over one step reproduces the degree-4 Taylor polynomial.
        let rhs = |_t: f64, x: &DVector<f64>| Ok(x.clone());
        let h = 0.3_f64;
        let x = DVector::from_column_slice(&[1.0]);
        let y = rk4_step(&rhs, 0.0, &x, h).unwrap();
        let expect = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((y[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn rk4_harmonic_oscillator_energy() {
        // Unit oscillator integrated for 10 s at h = 1e-3: relative energy
        // drift stays below 1e-8 (analytic-solution oracle).
        let rhs =
            |_t: f64, x: &DVector<f64>| Ok(DVector::from_column_slice(&[x[1], -x[0]]));
        let cfg = IntegratorConfig::new(1e-3, 10.0).unwrap();
        let mut x = DVector::from_column_slice(&[1.0, 0.0]);
        let e0 = 0.5 * (x[0] * x[0] + x[1] * x[1]);
        for k in 0..cfg.steps() {
            x = rk4_step(&rhs, k as f64 * cfg.step, &x, cfg.step).unwrap();
        }
        let e1 = 0.5 * (x[0] * x[0] + x[1] * x[1]);
        assert!(((e1 - e0) / e0).abs() < 1e-8);
        // position oracle: cos(10)
        assert!((x[0] - 10.0_f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn integrator_config_guards() {
        assert!(IntegratorConfig::new(0.0, 1.0).is_err());
        assert!(IntegratorConfig::new(1e-3, 1e-4).is_err());
        assert!(IntegratorConfig::new(1e-9, 1.0e1).is_err()); // step-count guard
        assert_eq!(IntegratorConfig::new(1e-3, 1.0).unwrap().steps(), 1000);
    }

    #[test]
    fn linearizing_torque_zero_at_equilibrium() {
        let model = registry::build_model("spacecraft", None).unwrap();
        let x = model.state(DVector::zeros(model.dims().n())).unwrap();
        let tau = linearizing_torque(&model, &x, &DVector::zeros(3)).unwrap();
        assert!(tau.amax() < 1e-12);
    }

    #[test]
    fn linearizing_torque_enforces_commanded_acceleration() {
        let model = registry::build_model("spacecraft", None).unwrap();
        let mut rng = crate::sampling::rng_from_seed(31);
        for _ in 0..8 {
            let xv = model.sample_box().sample(&mut rng);
            let x = model.state(xv).unwrap();
            let v = DVector::from_column_slice(&[0.4, -0.2, 0.1]);
            let tau = linearizing_torque(&model, &x, &v).unwrap();
            let xdot = dynamics(&model, &x, &tau).unwrap();
            let top: DVector<f64> = xdot.rows(0, 3).into();
            assert!((top - &v).amax() < 1e-9);

            // v = 0 zeroes the actuated rows entirely
            let tau0 = linearizing_torque(&model, &x, &DVector::zeros(3)).unwrap();
            let xdot0 = dynamics(&model, &x, &tau0).unwrap();
            assert!(xdot0.rows(0, 3).amax() < 1e-9);
        }
    }

    #[test]
    fn constant_trajectory_at_equilibrium() {
        let model = registry::build_model("spacecraft", None).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 0.5).unwrap();
        let x0 = DVector::zeros(model.dims().n());
        let policy = ControlPolicy::open_loop_constant(DVector::zeros(3));
        let traj = simulate(&model, &x0, &policy, &cfg).unwrap();
        assert_eq!(traj.len(), 51);
        for s in &traj.states {
            assert!(s.as_vector().amax() < 1e-14);
        }
    }

    #[test]
    fn angular_rate_held_constant_under_zero_command() {
        let model = registry::build_model("spacecraft", None).unwrap();
        let n = model.dims().n();
        let mut x0 = DVector::zeros(n);
        x0[0] = 0.02;
        x0[1] = -0.01;
        x0[2] = 0.015;
        x0[4] = 0.003; // one modal displacement
        let cfg = IntegratorConfig::new(1e-3, 2.0).unwrap();
        let policy = ControlPolicy::linearizing_constant(DVector::zeros(3));
        let traj = simulate(&model, &x0, &policy, &cfg).unwrap();
        for s in &traj.states {
            let w: DVector<f64> = s.as_vector().rows(0, 3).into();
            assert!((w - DVector::from_column_slice(&[0.02, -0.01, 0.015])).amax() < 1e-9);
        }
    }

    #[test]
    fn integration_abort_records_failure_time() {
        // The second diagonal entry decays linearly and crosses the
        // singularity gate near t = 1.
        use crate::model::{Dimensions, SystemModel};
        use crate::sampling::SampleBox;
        use nalgebra::DMatrix;
        use std::sync::Arc;
        let model = SystemModel::new(
            "decaying",
            Dimensions::new(2, 1, 1).unwrap(),
            Arc::new(|b: &DVector<f64>| {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, b[0]])
            }),
            Arc::new(|x: &DVector<f64>| DVector::from_column_slice(&[0.0, -x[1]])),
            DMatrix::identity(1, 1),
            SampleBox::new(vec![(-1.0, 1.0), (0.0, 1.0)]),
        )
        .unwrap();
        let cfg = IntegratorConfig::new(1e-3, 2.0).unwrap();
        let x0 = DVector::from_column_slice(&[0.0, 1.0]);
        let policy = ControlPolicy::open_loop_constant(DVector::zeros(1));
        match simulate(&model, &x0, &policy, &cfg) {
            Err(Error::IntegrationAbort { t, source }) => {
                assert!((0.9..=1.1).contains(&t), "aborted at t = {t}");
                assert!(matches!(*source, Error::SingularMass { .. }));
                assert_eq!(
                    Error::IntegrationAbort { t, source }.exit_code(),
                    3
                );
            }
            other => panic!("expected IntegrationAbort, got {other:?}"),
        }
    }

    #[test]
    fn zero_dynamics_compare_trivial_equilibrium() {
        let model = registry::build_model("spacecraft", None).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 0.2).unwrap();
        let eta0 = DVector::zeros(model.dims().n_beta());
        let cmp = zero_dynamics_compare(&model, &eta0, &cfg).unwrap();
        assert!(cmp.max_deviation < 1e-14);
    }

    #[test]
    fn zero_dynamics_compare_constant_mass_model() {
        let model = registry::build_model("constant", None).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 5.0).unwrap();
        let eta0 = DVector::from_column_slice(&[0.2, -0.1, 0.15]);
        let cmp = zero_dynamics_compare(&model, &eta0, &cfg).unwrap();
        assert!(
            cmp.max_deviation <= 1e-8,
            "deviation {:.3e}",
            cmp.max_deviation
        );
    }

    #[test]
    fn csv_header_contract() {
        let model = registry::build_model("coupled_demo", None).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 0.05).unwrap();
        let x0 = DVector::from_column_slice(&[0.1, 0.2, 0.0]);
        let policy = ControlPolicy::linearizing_constant(DVector::zeros(1));
        let traj = simulate(&model, &x0, &policy, &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,x_0,x_1,x_2,tau_0,zeta_0,eta_0,eta_1"
        );
        assert_eq!(text.lines().count(), 1 + traj.len());
        assert!(!text.contains('\r'));
    }
}
