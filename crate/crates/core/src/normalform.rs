//! Closed-form normal coordinates and internal dynamics.
//!
//! For a system in the class, the internal coordinates come directly from the
//! null basis of the transposed input map:
//!
//! ```text
//!     zeta = x_alpha
//!     eta  = N(x_beta)^T x_alpha + x_beta + c,     N = M12 M22^-1
//! ```
//!
//! with `c = 0` since every registered model places its equilibrium at the
//! origin. The internal rate has the closed form
//!
//! ```text
//!     eta' = M22^-1 l_beta + (M22^-1 M12_dot^T + (M22^-1)_dot M12^T) zeta
//! ```
//!
//! and is also computable from the raw derivation `eta' = X^T x' + N_dot^T
//! x_alpha`; both paths are exposed and must agree. The time derivatives of
//! the mass blocks are taken along the unforced flow: the input direction is
//! annihilated exactly by `G^T X = 0`, which is what makes the internal
//! dynamics input-free.
//!
//! Restricted to zero output (`x_alpha = 0`, forced by a nonsingular output
//! matrix), the rate collapses to the zero dynamics `eta' = M22^-1 l_beta`.

use nalgebra::{DMatrix, DVector};

use crate::blocklin::{decompose, null_basis, solve_symmetric, BlockDecomposition};
use crate::error::Result;
use crate::model::{drift, dynamics, StateVector, SystemModel};

/// External/internal coordinate pair, with the integration constants kept
/// explicit (identically zero for the registered models).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalState {
    /// External coordinates, the trivial mapping of `x_alpha`.
    pub zeta: DVector<f64>,
    /// Internal coordinates `N^T x_alpha + x_beta + c`.
    pub eta: DVector<f64>,
    /// Integration constants; zero so the transformation fixes the origin.
    pub c: DVector<f64>,
}

/// Internal rate split into its two closed-form contributions.
#[derive(Debug, Clone)]
pub struct NormalFormRhs {
    /// Total internal rate; contains no input dependence.
    pub eta_dot: DVector<f64>,
    /// `M22^-1 l_beta`.
    pub forced_part: DVector<f64>,
    /// The mass-rate coupling terms multiplying `zeta`.
    pub coupling_part: DVector<f64>,
}

/// Time derivatives of the coupling blocks along a given state derivative.
#[derive(Debug, Clone)]
pub struct MassRates {
    /// `d/dt M12`, p x (n-p).
    pub m12_dot: DMatrix<f64>,
    /// `d/dt (M22^-1) = -M22^-1 M22_dot M22^-1`, (n-p) x (n-p).
    pub m22_inv_dot: DMatrix<f64>,
}

/// Map a state to its normal coordinates.
pub fn normal_coordinates(model: &SystemModel, x: &StateVector) -> Result<NormalState> {
    let beta = x.beta();
    let m = model.mass_at(&beta)?;
    let d = decompose(&m, model.dims().p())?;
    let nb = null_basis(&d)?;
    let alpha = x.alpha();
    let c = DVector::zeros(model.dims().n_beta());
    let eta = nb.n.transpose() * &alpha + &beta + &c;
    Ok(NormalState {
        zeta: alpha,
        eta,
        c,
    })
}

/// Block time derivatives `M12_dot` and `(M22^-1)_dot` for the instantaneous
/// state derivative `x_dot`.
pub fn mass_time_derivatives(
    model: &SystemModel,
    x: &StateVector,
    x_dot: &DVector<f64>,
) -> Result<MassRates> {
    let dims = model.dims();
    let (p, n) = (dims.p(), dims.n());
    let beta = x.beta();
    let parts = model.mass_jacobian_at(&beta)?;
    let mut m_dot = DMatrix::zeros(n, n);
    for (i, part) in parts.iter().enumerate() {
        m_dot += part * x_dot[p + i];
    }
    let m12_dot: DMatrix<f64> = m_dot.view((0, p), (p, n - p)).into();
    let m22_dot: DMatrix<f64> = m_dot.view((p, p), (n - p, n - p)).into();

    let m = model.mass_at(&beta)?;
    let d = decompose(&m, p)?;
    let m22_inv = solve_symmetric(d.m22(), &DMatrix::identity(n - p, n - p), "M22")?;
    let m22_inv_dot = -&m22_inv * m22_dot * &m22_inv;
    Ok(MassRates {
        m12_dot,
        m22_inv_dot,
    })
}

fn coupling_terms(
    model: &SystemModel,
    x: &StateVector,
    d: &BlockDecomposition,
) -> Result<(MassRates, DMatrix<f64>)> {
    // Rates along the unforced flow; see the module docs.
    let f = drift(model, x)?;
    let rates = mass_time_derivatives(model, x, &f)?;
    let term1 = solve_symmetric(d.m22(), &rates.m12_dot.transpose(), "M22")?;
    let term2 = &rates.m22_inv_dot * d.m12().transpose();
    Ok((rates, term1 + term2))
}

/// Internal rate via the closed form. `tau` is accepted for signature
/// symmetry with [`eta_dot_direct`] but cannot influence the result.
pub fn eta_dot(model: &SystemModel, x: &StateVector, tau: &DVector<f64>) -> Result<NormalFormRhs> {
    let _ = tau;
    let dims = model.dims();
    let (p, n) = (dims.p(), dims.n());
    let m = model.mass_at(&x.beta())?;
    let d = decompose(&m, p)?;
    let l = model.force_at(x.as_vector())?;
    let l_beta: DVector<f64> = l.rows(p, n - p).into();
    let forced: DVector<f64> =
        solve_symmetric(d.m22(), &DMatrix::from_column_slice(n - p, 1, l_beta.as_slice()), "M22")?
            .column(0)
            .into();
    let (_, coupling_mat) = coupling_terms(model, x, &d)?;
    let coupling = coupling_mat * x.alpha();
    Ok(NormalFormRhs {
        eta_dot: &forced + &coupling,
        forced_part: forced,
        coupling_part: coupling,
    })
}

/// Internal rate via the raw derivation `eta' = X^T x' + N_dot^T x_alpha`,
/// with the full forced state derivative in the first term. Agreement with
/// [`eta_dot`] exercises the annihilation `G^T X = 0` numerically.
pub fn eta_dot_direct(
    model: &SystemModel,
    x: &StateVector,
    tau: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dims = model.dims();
    let p = dims.p();
    let m = model.mass_at(&x.beta())?;
    let d = decompose(&m, p)?;
    let nb = null_basis(&d)?;
    let x_dot = dynamics(model, x, tau)?;
    let (rates, _) = coupling_terms(model, x, &d)?;
    // N_dot = M12_dot M22^-1 + M12 (M22^-1)_dot
    let nt_dot = solve_symmetric(d.m22(), &rates.m12_dot.transpose(), "M22")?
        + &rates.m22_inv_dot * d.m12().transpose();
    Ok(nb.x.transpose() * x_dot + nt_dot * x.alpha())
}

/// Zero dynamics `eta' = M22^-1 l_beta` on the output-zeroing manifold,
/// where the state reconstructs as `x = (0, eta)`.
pub fn zero_dynamics_rhs(model: &SystemModel, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let dims = model.dims();
    let (p, n) = (dims.p(), dims.n());
    let x = StateVector::from_parts(&DVector::zeros(p), eta)?;
    let m = model.mass_at(eta)?;
    let d = decompose(&m, p)?;
    let l = model.force_at(x.as_vector())?;
    let l_beta: DVector<f64> = l.rows(p, n - p).into();
    let sol = solve_symmetric(
        d.m22(),
        &DMatrix::from_column_slice(n - p, 1, l_beta.as_slice()),
        "M22",
    )?;
    Ok(sol.column(0).into())
}
