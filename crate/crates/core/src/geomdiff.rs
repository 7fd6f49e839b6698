//! Numerical differential geometry: Jacobians, Lie derivatives and brackets,
//! involutivity of the input distribution, and relative degrees.
//!
//! Differentiation contract: central differences with per-coordinate step
//! `h_i = sqrt(eps) * max(1, |x_i|)`, giving O(h^2) truncation. Nested
//! differentiation loses roughly half the remaining digits per level, so
//! iterated Lie derivatives warn at depth 3 and callers should prefer models
//! with analytic Jacobians where accuracy matters.

use nalgebra::{DMatrix, DVector};

use crate::blocklin::numerical_rank;
use crate::error::{Error, Result};
use crate::model::{input_columns, SystemModel};

/// sqrt of f64 machine epsilon; the base central-difference step.
pub const SQRT_EPS: f64 = 1.4901161193847656e-8;

/// Nesting depth at which iterated Lie derivatives emit an accuracy warning.
pub const NESTED_WARN_DEPTH: usize = 3;

/// Relative zero threshold for Lie-derivative tests.
pub const LIE_ZERO_TOL: f64 = 1e-6;

fn fd_step(coord: f64) -> f64 {
    SQRT_EPS * coord.abs().max(1.0)
}

fn perturbed(x: &DVector<f64>, i: usize, delta: f64) -> DVector<f64> {
    let mut y = x.clone();
    y[i] += delta;
    y
}

/// Central-difference Jacobian of a vector field.
pub fn numeric_jacobian(
    field: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let f0 = field(x);
    let rows = f0.len();
    let mut jac = DMatrix::zeros(rows, n);
    for i in 0..n {
        let h = fd_step(x[i]);
        let fp = field(&perturbed(x, i, h));
        let fm = field(&perturbed(x, i, -h));
        if fp.len() != rows || fm.len() != rows {
            return Err(Error::EvaluationFailure(
                "field changed output dimension under perturbation".into(),
            ));
        }
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure(
            "non-finite value in numeric Jacobian".into(),
        ));
    }
    Ok(jac)
}

/// Central-difference gradient of a scalar field, returned as a row-gradient
/// stored in a vector.
pub fn numeric_gradient(
    h: &dyn Fn(&DVector<f64>) -> f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = x.len();
    let mut grad = DVector::zeros(n);
    for i in 0..n {
        let step = fd_step(x[i]);
        let hp = h(&perturbed(x, i, step));
        let hm = h(&perturbed(x, i, -step));
        grad[i] = (hp - hm) / (2.0 * step);
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure(
            "non-finite value in numeric gradient".into(),
        ));
    }
    Ok(grad)
}

/// Central-difference partials of a matrix-valued map, one matrix per input
/// coordinate.
pub fn numeric_matrix_jacobian(
    map: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let mut parts = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        let mp = map(&perturbed(x, i, h));
        let mm = map(&perturbed(x, i, -h));
        let part = (mp - mm) / (2.0 * h);
        if part.iter().any(|v| !v.is_finite()) {
            return Err(Error::EvaluationFailure(
                "non-finite value in matrix jacobian".into(),
            ));
        }
        parts.push(part);
    }
    Ok(parts)
}

/// Lie derivative `L_f h(x) = grad h(x) . f(x)`.
pub fn lie_derivative(
    h: &dyn Fn(&DVector<f64>) -> f64,
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let grad = numeric_gradient(h, x)?;
    let fx = f(x);
    if fx.len() != x.len() {
        return Err(Error::EvaluationFailure(
            "vector field dimension does not match state".into(),
        ));
    }
    let v = grad.dot(&fx);
    if !v.is_finite() {
        return Err(Error::EvaluationFailure(
            "non-finite Lie derivative".into(),
        ));
    }
    Ok(v)
}

fn iterated_lie_inner(
    h: &dyn Fn(&DVector<f64>) -> f64,
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    k: usize,
    x: &DVector<f64>,
) -> Result<f64> {
    if k == 0 {
        let v = h(x);
        if !v.is_finite() {
            return Err(Error::EvaluationFailure("non-finite scalar field".into()));
        }
        return Ok(v);
    }
    let inner = |y: &DVector<f64>| iterated_lie_inner(h, f, k - 1, y).unwrap_or(f64::NAN);
    lie_derivative(&inner, f, x)
}

/// Iterated Lie derivative `L_f^k h(x)`; `k = 0` returns `h(x)`.
pub fn iterated_lie(
    h: &dyn Fn(&DVector<f64>) -> f64,
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    k: usize,
    x: &DVector<f64>,
) -> Result<f64> {
    if k >= NESTED_WARN_DEPTH {
        log::warn!(
            "iterated Lie derivative at depth {k}: nested finite differences degrade to ~1e-4 accuracy"
        );
    }
    iterated_lie_inner(h, f, k, x)
}

/// Lie bracket `[a, b](x) = J_b(x) a(x) - J_a(x) b(x)`.
pub fn lie_bracket(
    g_a: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    g_b: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ja = numeric_jacobian(g_a, x)?;
    let jb = numeric_jacobian(g_b, x)?;
    Ok(jb * g_a(x) - ja * g_b(x))
}

/// Result of sampling the input distribution for closure under brackets.
#[derive(Debug, Clone)]
pub struct InvolutivityReport {
    pub involutive: bool,
    /// Largest rank([G | brackets]) - rank(G) observed over the samples.
    pub worst_rank_excess: usize,
    pub points_checked: usize,
}

/// Check closure of span{g_1..g_p} under Lie brackets at each sample point.
///
/// Certifies the property only on the supplied points; rank decisions use
/// singular values at `RANK_REL_TOL` relative threshold.
pub fn involutivity_check(
    model: &SystemModel,
    points: &[DVector<f64>],
) -> Result<InvolutivityReport> {
    let dims = model.dims();
    let p = dims.p();
    let g_col = |j: usize| {
        move |y: &DVector<f64>| -> DVector<f64> {
            let state = model.state(y.clone()).expect("state dimension");
            input_columns(model, &state)
                .map(|g| g.column(j).into())
                .unwrap_or_else(|_| DVector::from_element(y.len(), f64::NAN))
        }
    };

    let mut worst_excess = 0usize;
    for x in points {
        let state = model.state(x.clone())?;
        let g = input_columns(model, &state)?;
        let rank_g = numerical_rank(&g);
        if rank_g < p {
            return Err(Error::RankDeficientInputs {
                rank: rank_g,
                expected: p,
            });
        }
        let n_brackets = p * (p - 1) / 2;
        let mut augmented = DMatrix::zeros(dims.n(), p + n_brackets);
        augmented.view_mut((0, 0), (dims.n(), p)).copy_from(&g);
        let mut col = p;
        for i in 0..p {
            for j in (i + 1)..p {
                let gi = g_col(i);
                let gj = g_col(j);
                let bracket = lie_bracket(&gi, &gj, x)?;
                augmented.set_column(col, &bracket);
                col += 1;
            }
        }
        let rank_aug = numerical_rank(&augmented);
        worst_excess = worst_excess.max(rank_aug.saturating_sub(rank_g));
    }
    Ok(InvolutivityReport {
        involutive: worst_excess == 0,
        worst_rank_excess: worst_excess,
        points_checked: points.len(),
    })
}

/// Per-output relative degrees, the decoupling matrix at the probe point, and
/// whether the total structure is well defined there.
#[derive(Debug, Clone)]
pub struct RelativeDegreeReport {
    /// Per-output relative degree r_i.
    pub r_i: Vec<usize>,
    /// Total relative degree, sum of r_i.
    pub total: usize,
    /// s x p decoupling matrix assembled from row i = L_{g_j} L_f^{r_i - 1} h_i.
    pub e: DMatrix<f64>,
    pub well_defined: bool,
}

/// Find the smallest r_i with some `L_{g_j} L_f^{r_i - 1} h_i != 0` for each
/// output, then assemble the decoupling matrix.
pub fn relative_degree(
    model: &SystemModel,
    x_o: &DVector<f64>,
    k_max: usize,
) -> Result<RelativeDegreeReport> {
    let dims = model.dims();
    let (p, s) = (dims.p(), dims.s());
    let c = model.output_matrix().clone();
    let s_slice = dims.s();

    let f_field = |y: &DVector<f64>| -> DVector<f64> {
        let state = model.state(y.clone()).expect("state dimension");
        crate::model::drift(model, &state)
            .unwrap_or_else(|_| DVector::from_element(y.len(), f64::NAN))
    };
    let g_field = |j: usize| {
        move |y: &DVector<f64>| -> DVector<f64> {
            let state = model.state(y.clone()).expect("state dimension");
            input_columns(model, &state)
                .map(|g| g.column(j).into())
                .unwrap_or_else(|_| DVector::from_element(y.len(), f64::NAN))
        }
    };

    let state = model.state(x_o.clone())?;
    let g_at_probe = input_columns(model, &state)?;

    let mut r_i = Vec::with_capacity(s);
    let mut e = DMatrix::zeros(s, p);
    for i in 0..s {
        let h_i = {
            let c = c.clone();
            move |y: &DVector<f64>| -> f64 {
                let head: DVector<f64> = y.rows(0, s_slice).into();
                (c.row(i) * head)[0]
            }
        };
        let mut found = None;
        'search: for k in 1..=k_max {
            // L_f^{k-1} h_i as a scalar field for the inner differentiation.
            let chain = |y: &DVector<f64>| -> f64 {
                iterated_lie_inner(&h_i, &f_field, k - 1, y).unwrap_or(f64::NAN)
            };
            let mut row = DVector::zeros(p);
            let mut any_nonzero = false;
            for j in 0..p {
                let gj = g_field(j);
                let v = lie_derivative(&chain, &gj, x_o)?;
                row[j] = v;
                let scale: f64 = g_at_probe.column(j).amax();
                if v.abs() > LIE_ZERO_TOL * (1.0 + scale) {
                    any_nonzero = true;
                }
            }
            if any_nonzero {
                e.row_mut(i).copy_from(&row.transpose());
                found = Some(k);
                break 'search;
            }
        }
        match found {
            Some(k) => r_i.push(k),
            None => {
                return Err(Error::NoRelativeDegree {
                    output: i,
                    k_max,
                })
            }
        }
    }
    let total = r_i.iter().sum();
    let well_defined = numerical_rank(&e) == p;
    Ok(RelativeDegreeReport {
        r_i,
        total,
        e,
        well_defined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;
    use crate::sampling::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn jacobian_of_constant_field_is_zero() {
        let field = |_: &DVector<f64>| DVector::from_column_slice(&[1.0, 2.0]);
        let x = DVector::from_column_slice(&[0.3, -0.7, 2.0]);
        let jac = numeric_jacobian(&field, &x).unwrap();
        assert_eq!(jac, DMatrix::zeros(2, 3));
    }

    #[test]
    fn jacobian_of_linear_field_is_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 3.0]);
        let ac = a.clone();
        let field = move |x: &DVector<f64>| &ac * x;
        let x = DVector::from_column_slice(&[0.4, -1.3]);
        let jac = numeric_jacobian(&field, &x).unwrap();
        let rel = (jac - &a).amax() / a.amax();
        assert!(rel < 1e-7);
    }

    #[test]
    fn jacobian_matches_analytic_reference() {
        // Drift Jacobian of the demo with analytic mass jacobian: compare the
        // numeric Jacobian against an analytic chain-rule oracle built from
        // the model's own closed-form pieces.
        let model = registry::build_model("coupled_demo", None).unwrap();
        let mut rng = rng_from_seed(11);
        let xv = model.sample_box().sample(&mut rng);
        let f = |y: &DVector<f64>| {
            let st = model.state(y.clone()).unwrap();
            crate::model::drift(&model, &st).unwrap()
        };
        let jac = numeric_jacobian(&f, &xv).unwrap();

        // Oracle: d/dx (M^-1 l) = M^-1 (dl/dx - sum_k dM/dbeta_k f e_{beta_k}^T)
        let st = model.state(xv.clone()).unwrap();
        let m = model.mass_at(&st.beta()).unwrap();
        let m_inv = m.try_inverse().unwrap();
        let fx = crate::model::drift(&model, &st).unwrap();
        let dl = numeric_jacobian(
            &|y: &DVector<f64>| model.force_at(y).unwrap(),
            &xv,
        )
        .unwrap();
        let parts = model.mass_jacobian_at(&st.beta()).unwrap();
        let p = model.dims().p();
        let mut correction = DMatrix::zeros(3, 3);
        for (k, part) in parts.iter().enumerate() {
            let col = part * &fx;
            for r in 0..3 {
                correction[(r, p + k)] += col[r];
            }
        }
        let oracle = &m_inv * (dl - correction);
        assert!((jac - oracle).amax() < 1e-6);
    }

    #[test]
    fn lie_derivative_coordinate_projection() {
        let h = |x: &DVector<f64>| x[0];
        let f = |_: &DVector<f64>| DVector::from_column_slice(&[1.0, 0.0]);
        let x = DVector::from_column_slice(&[0.2, 0.9]);
        assert!((lie_derivative(&h, &f, &x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lie_derivative_linear_case() {
        // h = c'x, f = Ax: L_f h = c'Ax.
        let c = DVector::from_column_slice(&[1.0, -2.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 2.0]);
        let (cc, ac) = (c.clone(), a.clone());
        let h = move |x: &DVector<f64>| cc.dot(x);
        let f = move |x: &DVector<f64>| &ac * x;
        let x = DVector::from_column_slice(&[0.7, 0.3]);
        let expect = c.dot(&(&a * &x));
        let got = lie_derivative(&h, &f, &x).unwrap();
        assert!((got - expect).abs() / expect.abs().max(1.0) < 1e-8);
    }

    #[test]
    fn iterated_lie_double_integrator_chain() {
        // x1' = x2, x2' = 0 (unforced): L_f h = x2, L_f^2 h = 0 for h = x1.
        let h = |x: &DVector<f64>| x[0];
        let f = |x: &DVector<f64>| DVector::from_column_slice(&[x[1], 0.0]);
        let x = DVector::from_column_slice(&[0.4, -1.7]);
        assert_eq!(iterated_lie(&h, &f, 0, &x).unwrap(), 0.4);
        assert!((iterated_lie(&h, &f, 1, &x).unwrap() + 1.7).abs() < 1e-8);
        assert!(iterated_lie(&h, &f, 2, &x).unwrap().abs() < 1e-6);
    }

    #[test]
    fn lie_derivative_of_rate_coordinate_is_drift_component() {
        // h picks a coordinate, so L_f h and L_f^1 h are that drift entry.
        let model = registry::build_model("spacecraft", None).unwrap();
        let mut rng = rng_from_seed(29);
        let xv = model.sample_box().sample(&mut rng);
        let st = model.state(xv.clone()).unwrap();
        let f0 = crate::model::drift(&model, &st).unwrap()[0];
        let h = |x: &DVector<f64>| x[0];
        let f = |y: &DVector<f64>| {
            let st = model.state(y.clone()).unwrap();
            crate::model::drift(&model, &st).unwrap()
        };
        assert!((lie_derivative(&h, &f, &xv).unwrap() - f0).abs() < 1e-8);
        assert!((iterated_lie(&h, &f, 1, &xv).unwrap() - f0).abs() < 1e-8);
    }

    #[test]
    fn bracket_of_constant_fields_vanishes() {
        let a = |_: &DVector<f64>| DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let b = |_: &DVector<f64>| DVector::from_column_slice(&[-1.0, 0.0, 1.0]);
        let x = DVector::zeros(3);
        assert!(lie_bracket(&a, &b, &x).unwrap().amax() < 1e-9);
    }

    #[test]
    fn bracket_textbook_example() {
        // a = (1,0,0), b = (0,1,x1): [a,b] = (0,0,1).
        let a = |_: &DVector<f64>| DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let b = |x: &DVector<f64>| DVector::from_column_slice(&[0.0, 1.0, x[0]]);
        let x = DVector::from_column_slice(&[0.3, -0.4, 0.9]);
        let br = lie_bracket(&a, &b, &x).unwrap();
        assert!((br - DVector::from_column_slice(&[0.0, 0.0, 1.0])).amax() < 1e-7);
    }

    #[test]
    fn involutivity_constant_inputs() {
        let model = registry::build_model("constant", None).unwrap();
        let mut rng = rng_from_seed(5);
        let pts: Vec<_> = (0..20).map(|_| model.sample_box().sample(&mut rng)).collect();
        let report = involutivity_check(&model, &pts).unwrap();
        assert!(report.involutive);
        assert_eq!(report.worst_rank_excess, 0);
    }

    #[test]
    fn involutivity_rejects_nonholonomic_demo() {
        let model = registry::build_model("nonholonomic", None).unwrap();
        let mut rng = rng_from_seed(5);
        let mut pts = vec![model.sample_box().center()];
        pts.extend((0..20).map(|_| model.sample_box().sample(&mut rng)));
        let report = involutivity_check(&model, &pts).unwrap();
        assert!(!report.involutive);
        assert_eq!(report.worst_rank_excess, 1);
    }

    #[test]
    fn relative_degree_double_integrator() {
        let model = registry::build_model("double_integrator", None).unwrap();
        let x = model.sample_box().center();
        let report = relative_degree(&model, &x, model.dims().n()).unwrap();
        assert_eq!(report.r_i, vec![2]);
        assert_eq!(report.total, 2);
        assert!((report.e[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(report.well_defined);
    }

    #[test]
    fn relative_degree_fully_actuated() {
        // Identity mass, l = 0, p = n - 1: input appears in every x_i', so
        // the first output has r = 1.
        let model = crate::model::SystemModel::new(
            "full",
            crate::model::Dimensions::new(3, 2, 2).unwrap(),
            std::sync::Arc::new(|_: &DVector<f64>| DMatrix::identity(3, 3)),
            std::sync::Arc::new(|_: &DVector<f64>| DVector::zeros(3)),
            DMatrix::identity(2, 2),
            crate::sampling::SampleBox::symmetric(3, 1.0),
        )
        .unwrap();
        let report = relative_degree(&model, &DVector::zeros(3), 3).unwrap();
        assert_eq!(report.r_i, vec![1, 1]);
    }

    #[test]
    fn no_relative_degree_when_output_decoupled() {
        // Block-diagonal mass and a force whose chain never reaches x1: the
        // second output never sees the input.
        let model = crate::model::SystemModel::new(
            "decoupled",
            crate::model::Dimensions::new(3, 1, 2).unwrap(),
            std::sync::Arc::new(|_: &DVector<f64>| DMatrix::identity(3, 3)),
            std::sync::Arc::new(|x: &DVector<f64>| {
                DVector::from_column_slice(&[-x[0], -x[1] + x[2], -x[2]])
            }),
            DMatrix::identity(2, 2),
            crate::sampling::SampleBox::symmetric(3, 1.0),
        )
        .unwrap();
        let x = DVector::from_column_slice(&[0.1, 0.2, 0.3]);
        match relative_degree(&model, &x, 4) {
            Err(Error::NoRelativeDegree { output, .. }) => assert_eq!(output, 1),
            other => panic!("expected NoRelativeDegree, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Antisymmetry: [a,b] + [b,a] = 0 for smooth random fields.
        #[test]
        fn bracket_antisymmetry(s1 in -2.0f64..2.0, s2 in -2.0f64..2.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
            let a = move |x: &DVector<f64>| {
                DVector::from_column_slice(&[(s1 * x[0]).sin(), x[1] * x[0] + s2])
            };
            let b = move |x: &DVector<f64>| {
                DVector::from_column_slice(&[s2 * x[1], (s1 + x[0]).cos()])
            };
            let x = DVector::from_column_slice(&[x0, x1]);
            let ab = lie_bracket(&a, &b, &x).unwrap();
            let ba = lie_bracket(&b, &a, &x).unwrap();
            prop_assert!((ab + ba).amax() < 1e-9);
        }

        /// [a,a] = 0.
        #[test]
        fn bracket_with_self_vanishes(s in -2.0f64..2.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
            let a = move |x: &DVector<f64>| {
                DVector::from_column_slice(&[(s * x[1]).cos(), x[0] * x[0]])
            };
            let x = DVector::from_column_slice(&[x0, x1]);
            prop_assert!(lie_bracket(&a, &a, &x).unwrap().amax() < 1e-9);
        }

        /// Linear fields: bracket equals the matrix commutator applied to x.
        #[test]
        fn bracket_linear_is_commutator(a0 in -1.0f64..1.0, a1 in -1.0f64..1.0, b0 in -1.0f64..1.0, b1 in -1.0f64..1.0) {
            let a = DMatrix::from_row_slice(2, 2, &[a0, a1, -a1, a0 + 0.5]);
            let b = DMatrix::from_row_slice(2, 2, &[b0, -b1, b1, b0 - 0.25]);
            let (ac, bc) = (a.clone(), b.clone());
            let fa = move |x: &DVector<f64>| &ac * x;
            let fb = move |x: &DVector<f64>| &bc * x;
            let x = DVector::from_column_slice(&[0.6, -0.2]);
            let br = lie_bracket(&fa, &fb, &x).unwrap();
            let commutator = (&b * &a - &a * &b) * &x;
            prop_assert!((br - commutator).amax() < 1e-7);
        }
    }
}
