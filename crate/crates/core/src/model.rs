//! The system contract every other module consumes.
//!
//! A model describes an affine system `x' = f(x) + G(x) tau` whose drift
//! factors through a symmetric state-dependent system matrix:
//! `f = M^-1(x_beta) l(x)` and `G = ` first `p` columns of `M^-1(x_beta)`,
//! where `x_beta` is the unactuated tail of the state. `M` may only depend
//! on `x_beta`; the evaluation signature enforces that structurally.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::blocklin::{condition_estimate, max_abs};
use crate::error::{Error, Result, SINGULARITY_LIMIT};
use crate::geomdiff;
use crate::sampling::SampleBox;

/// State, input, and output dimensions with the class constraints
/// `p <= s <= n - 1` checked at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    n: usize,
    p: usize,
    s: usize,
}

impl Dimensions {
    pub fn new(n: usize, p: usize, s: usize) -> Result<Self> {
        if p == 0 || s == 0 || n == 0 {
            return Err(Error::InvalidDimensions(
                "dimensions must be positive".into(),
            ));
        }
        if !(p <= s && s < n) {
            return Err(Error::InvalidDimensions(format!(
                "need p <= s <= n - 1, got n = {n}, p = {p}, s = {s}"
            )));
        }
        Ok(Self { n, p, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Internal dimension n - p.
    pub fn n_beta(&self) -> usize {
        self.n - self.p
    }
}

/// State vector partitioned at index `p` into actuated head `alpha` and
/// unactuated tail `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    x: DVector<f64>,
    p: usize,
}

impl StateVector {
    pub fn new(x: DVector<f64>, p: usize) -> Result<Self> {
        if p == 0 || p >= x.len() {
            return Err(Error::InvalidDimensions(format!(
                "partition index p = {p} must satisfy 1 <= p < n = {}",
                x.len()
            )));
        }
        Ok(Self { x, p })
    }

    pub fn from_parts(alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<Self> {
        let mut x = DVector::zeros(alpha.len() + beta.len());
        x.rows_mut(0, alpha.len()).copy_from(alpha);
        x.rows_mut(alpha.len(), beta.len()).copy_from(beta);
        Self::new(x, alpha.len())
    }

    pub fn alpha(&self) -> DVector<f64> {
        self.x.rows(0, self.p).into()
    }

    pub fn beta(&self) -> DVector<f64> {
        self.x.rows(self.p, self.x.len() - self.p).into()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

pub type MassFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type MassJacobianFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type ForceFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Immutable, evaluable description of one system in the class.
///
/// Construction validates the output matrix; the mass map is validated
/// pointwise by the operations (symmetry is checked where blocks are
/// consumed, singularity through condition gates).
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    dims: Dimensions,
    mass: MassFn,
    mass_jacobian: Option<MassJacobianFn>,
    force: ForceFn,
    output: DMatrix<f64>,
    sample_box: SampleBox,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        dims: Dimensions,
        mass: MassFn,
        force: ForceFn,
        output: DMatrix<f64>,
        sample_box: SampleBox,
    ) -> Result<Self> {
        if output.nrows() != dims.s() || output.ncols() != dims.s() {
            return Err(Error::InvalidDimensions(format!(
                "output matrix must be {s} x {s}",
                s = dims.s()
            )));
        }
        let cond = condition_estimate(&output);
        if !cond.is_finite() || cond > SINGULARITY_LIMIT {
            return Err(Error::InvalidParams(
                "output matrix must be nonsingular".into(),
            ));
        }
        if sample_box.dim() != dims.n() {
            return Err(Error::InvalidDimensions(
                "sample box dimension must equal n".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            dims,
            mass,
            mass_jacobian: None,
            force,
            output,
            sample_box,
        })
    }

    /// Attach analytic partials of `M` with respect to each `x_beta`
    /// coordinate; without them the numeric fallback is used.
    pub fn with_mass_jacobian(mut self, jac: MassJacobianFn) -> Self {
        self.mass_jacobian = Some(jac);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn sample_box(&self) -> &SampleBox {
        &self.sample_box
    }

    pub fn output_matrix(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn has_analytic_mass_jacobian(&self) -> bool {
        self.mass_jacobian.is_some()
    }

    /// Evaluate `M(x_beta)`.
    pub fn mass_at(&self, x_beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x_beta.len() != self.dims.n_beta() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.n_beta(),
                got: x_beta.len(),
            });
        }
        let m = (self.mass)(x_beta);
        if m.nrows() != self.dims.n() || m.ncols() != self.dims.n() {
            return Err(Error::EvaluationFailure(format!(
                "mass map returned a {}x{} matrix for n = {}",
                m.nrows(),
                m.ncols(),
                self.dims.n()
            )));
        }
        Ok(m)
    }

    /// Partials of `M` w.r.t. each `x_beta` coordinate, analytic when the
    /// model provides them, central differences otherwise.
    pub fn mass_jacobian_at(&self, x_beta: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        if let Some(jac) = &self.mass_jacobian {
            let parts = jac(x_beta);
            if parts.len() != self.dims.n_beta() {
                return Err(Error::EvaluationFailure(
                    "mass jacobian must provide one matrix per x_beta coordinate".into(),
                ));
            }
            return Ok(parts);
        }
        geomdiff::numeric_matrix_jacobian(|b| (self.mass)(b), x_beta)
    }

    /// Evaluate `l(x)`.
    pub fn force_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dims.n() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.n(),
                got: x.len(),
            });
        }
        let l = (self.force)(x);
        if l.len() != self.dims.n() {
            return Err(Error::EvaluationFailure(
                "force map returned a vector of the wrong length".into(),
            ));
        }
        Ok(l)
    }

    /// Wrap a raw vector as a state partitioned at this model's `p`.
    pub fn state(&self, x: DVector<f64>) -> Result<StateVector> {
        if x.len() != self.dims.n() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.n(),
                got: x.len(),
            });
        }
        StateVector::new(x, self.dims.p())
    }

    /// Output `y = C x_{1..s}`.
    pub fn output_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dims.n() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.n(),
                got: x.len(),
            });
        }
        let head: DVector<f64> = x.rows(0, self.dims.s()).into();
        Ok(&self.output * head)
    }
}

fn gated_mass_lu(
    model: &SystemModel,
    x_beta: &DVector<f64>,
) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let m = model.mass_at(x_beta)?;
    let cond = condition_estimate(&m);
    if !cond.is_finite() || cond > SINGULARITY_LIMIT {
        return Err(Error::SingularMass { cond });
    }
    Ok(m.lu())
}

fn input_rhs(n: usize, p: usize) -> DMatrix<f64> {
    let mut rhs = DMatrix::zeros(n, p);
    rhs.view_mut((0, 0), (p, p))
        .copy_from(&DMatrix::identity(p, p));
    rhs
}

/// Drift `f = M^-1(x_beta) l(x)`, computed by a linear solve.
pub fn drift(model: &SystemModel, x: &StateVector) -> Result<DVector<f64>> {
    check_state(model, x)?;
    let lu = gated_mass_lu(model, &x.beta())?;
    let l = model.force_at(x.as_vector())?;
    lu.solve(&l)
        .ok_or(Error::SingularMass { cond: f64::INFINITY })
}

/// Input map `G`: the first `p` columns of `M^-1(x_beta)`, from solving
/// `M G = [I_p; 0]`.
pub fn input_columns(model: &SystemModel, x: &StateVector) -> Result<DMatrix<f64>> {
    check_state(model, x)?;
    let dims = model.dims();
    let lu = gated_mass_lu(model, &x.beta())?;
    lu.solve(&input_rhs(dims.n(), dims.p()))
        .ok_or(Error::SingularMass { cond: f64::INFINITY })
}

/// Full right-hand side `f(x) + G(x) tau`, sharing one factorization of `M`.
pub fn dynamics(model: &SystemModel, x: &StateVector, tau: &DVector<f64>) -> Result<DVector<f64>> {
    check_state(model, x)?;
    let dims = model.dims();
    if tau.len() != dims.p() {
        return Err(Error::DimensionMismatch {
            expected: dims.p(),
            got: tau.len(),
        });
    }
    let lu = gated_mass_lu(model, &x.beta())?;
    let l = model.force_at(x.as_vector())?;
    let mut rhs = DMatrix::zeros(dims.n(), 1 + dims.p());
    rhs.column_mut(0).copy_from(&l);
    rhs.view_mut((0, 1), (dims.p(), dims.p()))
        .copy_from(&DMatrix::identity(dims.p(), dims.p()));
    let sol = lu
        .solve(&rhs)
        .ok_or(Error::SingularMass { cond: f64::INFINITY })?;
    let f: DVector<f64> = sol.column(0).into();
    let g: DMatrix<f64> = sol.view((0, 1), (dims.n(), dims.p())).into();
    Ok(f + g * tau)
}

/// Symmetry residual `max|M - M^T|` at one point.
pub fn symmetry_residual(model: &SystemModel, x_beta: &DVector<f64>) -> Result<f64> {
    let m = model.mass_at(x_beta)?;
    Ok(max_abs(&(&m - m.transpose())))
}

fn check_state(model: &SystemModel, x: &StateVector) -> Result<()> {
    let dims = model.dims();
    if x.as_vector().len() != dims.n() {
        return Err(Error::DimensionMismatch {
            expected: dims.n(),
            got: x.as_vector().len(),
        });
    }
    if x.p() != dims.p() {
        return Err(Error::InvalidDimensions(format!(
            "state partitioned at {} but model has p = {}",
            x.p(),
            dims.p()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;
    use crate::sampling::rng_from_seed;
    use proptest::prelude::*;

    fn identity_model(n: usize, p: usize) -> SystemModel {
        SystemModel::new(
            "identity",
            Dimensions::new(n, p, p).unwrap(),
            Arc::new(move |_b: &DVector<f64>| DMatrix::identity(n, n)),
            Arc::new(|x: &DVector<f64>| x.clone()),
            DMatrix::identity(p, p),
            SampleBox::symmetric(n, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn dimensions_enforce_class_bounds() {
        assert!(Dimensions::new(5, 2, 3).is_ok());
        assert!(Dimensions::new(5, 3, 2).is_err()); // p > s
        assert!(Dimensions::new(5, 2, 5).is_err()); // s > n - 1
        assert!(Dimensions::new(1, 1, 1).is_err()); // n - p = 0
    }

    #[test]
    fn state_partition_accessors() {
        let x = StateVector::new(DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(x.alpha().as_slice(), &[1.0, 2.0]);
        assert_eq!(x.beta().as_slice(), &[3.0, 4.0]);
        let back = StateVector::from_parts(&x.alpha(), &x.beta()).unwrap();
        assert_eq!(back.as_vector(), x.as_vector());
    }

    #[test]
    fn drift_identity_mass_returns_force() {
        let model = identity_model(4, 2);
        let x = model
            .state(DVector::from_column_slice(&[1.0, -2.0, 0.5, 3.0]))
            .unwrap();
        let f = drift(&model, &x).unwrap();
        assert_eq!(f, *x.as_vector());
    }

    #[test]
    fn drift_matches_dense_inverse_oracle() {
        // n = 5, p = 2, SPD mass: oracle = explicit inverse times force.
        let model = registry::build_model_from_json(
            "spd_random",
            &serde_json::json!({"n": 5, "p": 2}),
        )
        .unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..32 {
            let xv = model.sample_box().sample(&mut rng);
            let x = model.state(xv.clone()).unwrap();
            let f = drift(&model, &x).unwrap();
            let m = model.mass_at(&x.beta()).unwrap();
            let oracle = m.try_inverse().unwrap() * model.force_at(&xv).unwrap();
            assert!((f - oracle).amax() < 1e-11);
        }
    }

    #[test]
    fn input_columns_identity_and_block_diagonal() {
        let model = identity_model(5, 2);
        let x = model.state(DVector::zeros(5)).unwrap();
        let g = input_columns(&model, &x).unwrap();
        assert_eq!(g.view((0, 0), (2, 2)), DMatrix::identity(2, 2));
        assert_eq!(g.view((2, 0), (3, 2)), DMatrix::zeros(3, 2));

        // Block-diagonal mass: G = [M11^-1; 0].
        let m11 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let m11c = m11.clone();
        let model = SystemModel::new(
            "blockdiag",
            Dimensions::new(5, 2, 2).unwrap(),
            Arc::new(move |_b: &DVector<f64>| {
                let mut m = DMatrix::identity(5, 5);
                m.view_mut((0, 0), (2, 2)).copy_from(&m11c);
                m
            }),
            Arc::new(|x: &DVector<f64>| -x),
            DMatrix::identity(2, 2),
            SampleBox::symmetric(5, 1.0),
        )
        .unwrap();
        let x = model.state(DVector::zeros(5)).unwrap();
        let g = input_columns(&model, &x).unwrap();
        let top: DMatrix<f64> = g.view((0, 0), (2, 2)).into();
        assert!((top - m11.try_inverse().unwrap()).amax() < 1e-14);
        assert!(g.view((2, 0), (3, 2)).amax() < 1e-15);
    }

    #[test]
    fn numeric_mass_jacobian_fallback() {
        // nonholonomic provides no analytic jacobian; the central-difference
        // fallback must match the analytic derivative of the designed
        // inverse: d(W^-1)/db = -W^-1 (dW/db) W^-1.
        let model = registry::build_model("nonholonomic", None).unwrap();
        assert!(!model.has_analytic_mass_jacobian());
        let beta = DVector::from_column_slice(&[0.5, 0.7]);
        let parts = model.mass_jacobian_at(&beta).unwrap();
        let (b3, b4) = (beta[0], beta[1]);
        let c = 1.0 + b3 * b3 + b4 * b4;
        let w = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, b4, 0.0, 0.0, 1.0, 0.0, b3, b4, 0.0, c, 0.0, 0.0, b3, 0.0, c,
            ],
        );
        let w_inv = w.try_inverse().unwrap();
        let dw3 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0 * b3, 0.0, 0.0, 1.0, 0.0,
                2.0 * b3,
            ],
        );
        let dw4 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0 * b4, 0.0, 0.0, 0.0, 0.0,
                2.0 * b4,
            ],
        );
        let oracle3 = -&w_inv * dw3 * &w_inv;
        let oracle4 = -&w_inv * dw4 * &w_inv;
        assert!((&parts[0] - oracle3).amax() < 1e-7);
        assert!((&parts[1] - oracle4).amax() < 1e-7);
    }

    #[test]
    fn singular_mass_is_reported() {
        let model = SystemModel::new(
            "illcond",
            Dimensions::new(2, 1, 1).unwrap(),
            Arc::new(|_b: &DVector<f64>| {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-15])
            }),
            Arc::new(|x: &DVector<f64>| x.clone()),
            DMatrix::identity(1, 1),
            SampleBox::symmetric(2, 1.0),
        )
        .unwrap();
        let x = model.state(DVector::zeros(2)).unwrap();
        assert!(matches!(
            drift(&model, &x),
            Err(Error::SingularMass { .. })
        ));
    }

    #[test]
    fn dynamics_with_zero_input_is_drift() {
        let model = registry::build_model("coupled_demo", None).unwrap();
        let x = model
            .state(DVector::from_column_slice(&[0.2, 0.4, -0.1]))
            .unwrap();
        let f = drift(&model, &x).unwrap();
        let d = dynamics(&model, &x, &DVector::zeros(1)).unwrap();
        assert!((f - d).amax() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// dynamics is affine in tau.
        #[test]
        fn dynamics_affine_in_input(seed in 0u64..500) {
            let model = registry::build_model("spd_random", None).unwrap();
            let mut rng = rng_from_seed(seed);
            let xv = model.sample_box().sample(&mut rng);
            let x = model.state(xv).unwrap();
            let p = model.dims().p();
            let t1 = DVector::from_fn(p, |i, _| (seed as f64 * 0.1 + i as f64).sin());
            let t2 = DVector::from_fn(p, |i, _| (seed as f64 * 0.3 - i as f64).cos());
            let lhs = dynamics(&model, &x, &(&t1 + &t2)).unwrap();
            let rhs = dynamics(&model, &x, &t1).unwrap() + dynamics(&model, &x, &t2).unwrap()
                - dynamics(&model, &x, &DVector::zeros(p)).unwrap();
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
