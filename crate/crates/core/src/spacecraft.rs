//! Flexible-spacecraft attitude dynamics assembled into the system class.
//!
//! State ordering is `x = [omega; chi; chi_dot]` with `omega` the body
//! angular rate (3), `chi` the non-dimensional modal displacements of the
//! flexible appendages (N_f), and `chi_dot` their rates. The first-order
//! embedding keeps the `chi` rows as kinematic identities, so the full system
//! matrix is
//!
//! ```text
//!     M = [ I_t  0  P   ]      I_t: total inertia tensor
//!         [ 0    I  0   ]      P:   rate-coupling matrix, 3 x N_f
//!         [ P^T  0  ab I]      ab:  panel area (modal mass scale)
//! ```
//!
//! and the force stack is `l = [l_omega; chi_dot; l_chi]` with
//! `l_omega = -I_t_dot omega - omega x (I_t omega + P chi_dot + h_w)` and the
//! dissipative modal force `l_chi = -K chi - D chi_dot`.
//!
//! By default the inertia tensor is constant; setting `inertia_gradient`
//! enables the configuration-dependent variant `I_t(chi) = I_0 + chi_1 dI`
//! used to exercise the mass-rate machinery.

use nalgebra::{Complex, DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geomdiff::numeric_jacobian;
use crate::model::{Dimensions, SystemModel};
use crate::normalform::zero_dynamics_rhs;
use crate::sampling::SampleBox;
use crate::sim::{rk4_step, zero_dynamics_compare, IntegratorConfig};

/// Real-part threshold separating "stable" from "marginal" linearizations.
pub const STABILITY_MARGIN: f64 = 1e-8;

/// Physical parameters of the flexible spacecraft.
#[derive(Debug, Clone)]
pub struct SpacecraftParams {
    /// Total inertia tensor, kg m^2, symmetric positive definite.
    pub inertia: Matrix3<f64>,
    /// Constant realization of the modal rate coupling, 3 x N_f.
    pub coupling: DMatrix<f64>,
    /// Modal stiffness, N_f x N_f, symmetric positive definite.
    pub stiffness: DMatrix<f64>,
    /// Diagonal modal damping entries, all >= 0.
    pub damping: DVector<f64>,
    /// Panel area a*b scaling the modal mass block.
    pub panel_area: f64,
    /// Reaction-wheel angular momentum bias.
    pub wheel_momentum: Vector3<f64>,
    /// Number of retained flexible modes N_f.
    pub mode_count: usize,
    /// Optional inertia dependence on the first mode: I_t(chi) = I + chi_1 dI.
    pub inertia_gradient: Option<Matrix3<f64>>,
}

impl SpacecraftParams {
    /// Desk-scale defaults: modal frequencies spread over 0.5..5 Hz, 2%
    /// modal damping, coupling sized to about 0.3 of sqrt(min inertia * area).
    pub fn default_with_modes(n_f: usize) -> Self {
        assert!(n_f >= 1, "at least one flexible mode");
        let inertia = Matrix3::from_diagonal(&Vector3::new(1200.0, 800.0, 1000.0));
        let panel_area = 3.0;
        let freqs: Vec<f64> = (0..n_f)
            .map(|i| {
                if n_f == 1 {
                    0.5
                } else {
                    0.5 + 4.5 * i as f64 / (n_f as f64 - 1.0)
                }
            })
            .collect();
        let omegas: Vec<f64> = freqs.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
        let stiffness = DMatrix::from_fn(n_f, n_f, |i, j| {
            if i == j {
                omegas[i] * omegas[i] * panel_area
            } else {
                0.0
            }
        });
        let damping = DVector::from_fn(n_f, |i, _| 2.0 * 0.02 * omegas[i] * panel_area);

        let raw = DMatrix::from_fn(3, n_f, |i, j| (1.0 + 3.0 * i as f64 + 0.7 * j as f64).sin());
        let target = 0.3 * (800.0_f64 * panel_area).sqrt();
        let coupling = &raw * (target / raw.norm());

        Self {
            inertia,
            coupling,
            stiffness,
            damping,
            panel_area,
            wheel_momentum: Vector3::zeros(),
            mode_count: n_f,
            inertia_gradient: None,
        }
    }

    /// Defaults plus the configuration-dependent inertia variant.
    pub fn default_with_inertia_gradient(n_f: usize) -> Self {
        let mut p = Self::default_with_modes(n_f);
        p.inertia_gradient = Some(Matrix3::from_diagonal(&Vector3::new(40.0, 25.0, 30.0)));
        p
    }

    pub fn validate(&self) -> Result<()> {
        let n_f = self.mode_count;
        if n_f == 0 {
            return Err(Error::InvalidParams("mode_count must be >= 1".into()));
        }
        if (self.inertia - self.inertia.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParams("inertia must be symmetric".into()));
        }
        if self.inertia.cholesky().is_none() {
            return Err(Error::InvalidParams(
                "inertia must be positive definite".into(),
            ));
        }
        if self.coupling.nrows() != 3 || self.coupling.ncols() != n_f {
            return Err(Error::InvalidParams(format!(
                "coupling must be 3 x {n_f}"
            )));
        }
        if self.stiffness.nrows() != n_f || self.stiffness.ncols() != n_f {
            return Err(Error::InvalidParams(format!(
                "stiffness must be {n_f} x {n_f}"
            )));
        }
        if (&self.stiffness - self.stiffness.transpose()).amax() > 1e-12
            || self.stiffness.clone().cholesky().is_none()
        {
            return Err(Error::InvalidParams(
                "stiffness must be symmetric positive definite".into(),
            ));
        }
        if self.damping.len() != n_f || self.damping.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidParams(
                "damping must have N_f nonnegative entries".into(),
            ));
        }
        if self.panel_area <= 0.0 {
            return Err(Error::InvalidParams("panel_area must be positive".into()));
        }
        if let Some(grad) = &self.inertia_gradient {
            if (grad - grad.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidParams(
                    "inertia_gradient must be symmetric".into(),
                ));
            }
        }
        Ok(())
    }

    /// Assembled state dimension n = 3 + 2 N_f.
    pub fn state_dim(&self) -> usize {
        3 + 2 * self.mode_count
    }

    fn inertia_at(&self, chi1: f64) -> Matrix3<f64> {
        match &self.inertia_gradient {
            Some(grad) => self.inertia + grad * chi1,
            None => self.inertia,
        }
    }
}

impl Default for SpacecraftParams {
    fn default() -> Self {
        Self::default_with_modes(2)
    }
}

/// Angular momentum stored in the appendage motion: `P chi_dot`.
pub fn kappa_t(params: &SpacecraftParams, chi_dot: &DVector<f64>) -> Vector3<f64> {
    let v = &params.coupling * chi_dot;
    Vector3::new(v[0], v[1], v[2])
}

/// Modal energy `1/2 chi_dot' (ab I) chi_dot + 1/2 chi' K chi`.
pub fn modal_energy(params: &SpacecraftParams, chi: &DVector<f64>, chi_dot: &DVector<f64>) -> f64 {
    0.5 * params.panel_area * chi_dot.dot(chi_dot) + 0.5 * chi.dot(&(&params.stiffness * chi))
}

/// Assemble the spacecraft into a [`SystemModel`].
pub fn build(params: &SpacecraftParams) -> Result<SystemModel> {
    params.validate()?;
    let n_f = params.mode_count;
    let n = params.state_dim();
    let dims = Dimensions::new(n, 3, 3)?;

    let mass_params = params.clone();
    let mass = move |beta: &DVector<f64>| -> DMatrix<f64> {
        let it = mass_params.inertia_at(beta[0]);
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (3, 3)).copy_from(&it);
        m.view_mut((0, 3 + n_f), (3, n_f))
            .copy_from(&mass_params.coupling);
        m.view_mut((3 + n_f, 0), (n_f, 3))
            .copy_from(&mass_params.coupling.transpose());
        for i in 0..n_f {
            m[(3 + i, 3 + i)] = 1.0;
            m[(3 + n_f + i, 3 + n_f + i)] = mass_params.panel_area;
        }
        m
    };

    let jac_params = params.clone();
    let mass_jacobian = move |_beta: &DVector<f64>| -> Vec<DMatrix<f64>> {
        let mut parts = vec![DMatrix::zeros(n, n); 2 * n_f];
        if let Some(grad) = &jac_params.inertia_gradient {
            parts[0].view_mut((0, 0), (3, 3)).copy_from(grad);
        }
        parts
    };

    let force_params = params.clone();
    let force = move |x: &DVector<f64>| -> DVector<f64> {
        let omega = Vector3::new(x[0], x[1], x[2]);
        let chi: DVector<f64> = x.rows(3, n_f).into();
        let chi_dot: DVector<f64> = x.rows(3 + n_f, n_f).into();
        let it = force_params.inertia_at(chi[0]);
        let momentum = it * omega + kappa_t(&force_params, &chi_dot) + force_params.wheel_momentum;
        let mut l_omega = -omega.cross(&momentum);
        if let Some(grad) = &force_params.inertia_gradient {
            l_omega -= grad * chi_dot[0] * omega;
        }
        let l_chi = -&force_params.stiffness * &chi
            - DVector::from_fn(n_f, |i, _| force_params.damping[i] * chi_dot[i]);
        let mut l = DVector::zeros(n);
        l.rows_mut(0, 3).copy_from(&l_omega);
        l.rows_mut(3, n_f).copy_from(&chi_dot);
        l.rows_mut(3 + n_f, n_f).copy_from(&l_chi);
        l
    };

    let mut bounds = vec![(-0.1, 0.1); 3];
    bounds.extend(vec![(-0.02, 0.02); n_f]);
    bounds.extend(vec![(-0.05, 0.05); n_f]);

    Ok(SystemModel::new(
        "spacecraft",
        dims,
        std::sync::Arc::new(mass),
        std::sync::Arc::new(force),
        DMatrix::identity(3, 3),
        SampleBox::new(bounds),
    )?
    .with_mass_jacobian(std::sync::Arc::new(mass_jacobian)))
}

/// Zero-dynamics analysis of the spacecraft.
#[derive(Debug, Clone)]
pub struct SpacecraftZeroDynamics {
    pub times: Vec<f64>,
    /// Internal trajectory of the reduced closed-form equation.
    pub etas: Vec<DVector<f64>>,
    /// Eigenvalues of the zero-dynamics linearization at the origin.
    pub eigenvalues: Vec<Complex<f64>>,
    /// True when every eigenvalue real part lies below `-STABILITY_MARGIN`.
    pub stable: bool,
    /// Sup-norm gap between the Schur-complement candidate form
    /// `chi_ddot = F22^-1 l_chi` and the reduced closed form.
    pub schur_form_deviation: f64,
    /// Sup-norm gap between the reduced closed form and the constrained
    /// full simulation.
    pub sim_deviation: f64,
}

/// Integrate the spacecraft zero dynamics from `(chi0, chidot0)` and check
/// its stability and both candidate right-hand sides against the
/// constrained-simulation oracle.
pub fn zero_dynamics_spacecraft(
    params: &SpacecraftParams,
    chi0: &DVector<f64>,
    chidot0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<SpacecraftZeroDynamics> {
    let n_f = params.mode_count;
    if chi0.len() != n_f || chidot0.len() != n_f {
        return Err(Error::DimensionMismatch {
            expected: n_f,
            got: chi0.len().max(chidot0.len()),
        });
    }
    let model = build(params)?;
    let mut eta0 = DVector::zeros(2 * n_f);
    eta0.rows_mut(0, n_f).copy_from(chi0);
    eta0.rows_mut(n_f, n_f).copy_from(chidot0);

    // Reduced closed-form trajectory.
    let rhs = |_t: f64, eta: &DVector<f64>| zero_dynamics_rhs(&model, eta);
    let steps = cfg.steps();
    let mut etas = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut eta = eta0.clone();
    for k in 0..=steps {
        times.push(k as f64 * cfg.step);
        etas.push(eta.clone());
        if k < steps {
            eta = rk4_step(&rhs, k as f64 * cfg.step, &eta, cfg.step)?;
        }
    }

    // Linearization spectrum at the origin.
    let field = |eta: &DVector<f64>| {
        zero_dynamics_rhs(&model, eta).unwrap_or_else(|_| DVector::from_element(eta.len(), f64::NAN))
    };
    let jac = numeric_jacobian(&field, &DVector::zeros(2 * n_f))?;
    let eigenvalues: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().cloned().collect();
    let stable = eigenvalues.iter().all(|l| l.re < -STABILITY_MARGIN);

    // Schur-complement candidate: chi_ddot = F22^-1 l_chi with
    // F22 = ab I - P^T I_t^-1 P.
    let it_inv = params
        .inertia_at(0.0)
        .try_inverse()
        .ok_or_else(|| Error::InvalidParams("inertia not invertible".into()))?;
    let f22 = DMatrix::identity(n_f, n_f) * params.panel_area
        - params.coupling.transpose() * it_inv * &params.coupling;
    let f22_lu = f22.lu();
    let schur_rhs = |_t: f64, eta: &DVector<f64>| -> Result<DVector<f64>> {
        let chi: DVector<f64> = eta.rows(0, n_f).into();
        let chi_dot: DVector<f64> = eta.rows(n_f, n_f).into();
        let l_chi = -&params.stiffness * &chi
            - DVector::from_fn(n_f, |i, _| params.damping[i] * chi_dot[i]);
        let accel = f22_lu
            .solve(&l_chi)
            .ok_or(Error::SingularBlock {
                block: "F22",
                cond: f64::INFINITY,
            })?;
        let mut out = DVector::zeros(2 * n_f);
        out.rows_mut(0, n_f).copy_from(&chi_dot);
        out.rows_mut(n_f, n_f).copy_from(&accel);
        Ok(out)
    };
    let mut schur_eta = eta0.clone();
    let mut schur_form_deviation = 0.0_f64;
    for (k, eta_ref) in etas.iter().enumerate() {
        schur_form_deviation = schur_form_deviation.max((&schur_eta - eta_ref).amax());
        if k < steps {
            schur_eta = rk4_step(&schur_rhs, k as f64 * cfg.step, &schur_eta, cfg.step)?;
        }
    }

    // Constrained-simulation oracle.
    let cmp = zero_dynamics_compare(&model, &eta0, cfg)?;

    Ok(SpacecraftZeroDynamics {
        times,
        etas,
        eigenvalues,
        stable,
        schur_form_deviation,
        sim_deviation: cmp.max_deviation,
    })
}
