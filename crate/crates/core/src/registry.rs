//! Registry of concrete models, keyed by name, with JSON parameterization.
//!
//! Registered names:
//!
//! * `spacecraft` - flexible spacecraft, default N_f = 2
//! * `constant` - deterministic constant SPD system matrix
//! * `spd_random` - seeded random constant SPD system matrix
//! * `coupled_demo` - one actuated velocity coupled to one flexible
//!   coordinate through a configuration-dependent system matrix (exercises
//!   the mass-rate terms)
//! * `nonholonomic` - input distribution deliberately not closed under
//!   brackets (negative fixture for involutivity)
//! * `double_integrator` - relative degree 2 fixture; its M22 block is
//!   singular, so the partitioned machinery does not apply and only
//!   input/output analysis runs
//! * `asymmetric` - deliberately asymmetric system matrix (negative fixture
//!   for the symmetry gate)

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Dimensions, ForceFn, MassJacobianFn, SystemModel};
use crate::sampling::SampleBox;
use crate::spacecraft::{self, SpacecraftParams};

pub const MODEL_NAMES: [&str; 7] = [
    "spacecraft",
    "constant",
    "spd_random",
    "coupled_demo",
    "nonholonomic",
    "double_integrator",
    "asymmetric",
];

/// What the verification suite should run and expect for each registered
/// model.
#[derive(Debug, Clone)]
pub struct VerifyProfile {
    /// Partitioned-algebra suites apply (M22 and F11 nonsingular).
    pub run_blocklin: bool,
    /// Normal-coordinate and internal-rate suites apply (the closed-form
    /// construction's assumptions are meant to hold).
    pub run_normalform: bool,
    /// Closed-loop trajectory suites apply.
    pub run_trajectories: bool,
    pub expected_involutive: bool,
    pub expected_relative_degrees: Vec<usize>,
    /// Whether `p <= s <= r < n` is expected to hold.
    pub expected_dims_chain: bool,
    /// Gate on the zero-dynamics comparison against the constrained
    /// simulation, when applicable.
    pub zero_dynamics_gate: Option<f64>,
    pub is_spacecraft: bool,
}

pub fn verify_profile(name: &str) -> Result<VerifyProfile> {
    let p = match name {
        "spacecraft" => VerifyProfile {
            run_blocklin: true,
            run_normalform: true,
            run_trajectories: true,
            expected_involutive: true,
            expected_relative_degrees: vec![1, 1, 1],
            expected_dims_chain: true,
            zero_dynamics_gate: Some(1e-6),
            is_spacecraft: true,
        },
        "constant" => VerifyProfile {
            run_blocklin: true,
            run_normalform: true,
            run_trajectories: true,
            expected_involutive: true,
            expected_relative_degrees: vec![1, 1],
            expected_dims_chain: true,
            zero_dynamics_gate: Some(1e-8),
            is_spacecraft: false,
        },
        "spd_random" => VerifyProfile {
            run_blocklin: true,
            run_normalform: true,
            run_trajectories: true,
            expected_involutive: true,
            expected_relative_degrees: vec![1, 1],
            expected_dims_chain: true,
            zero_dynamics_gate: Some(1e-8),
            is_spacecraft: false,
        },
        "coupled_demo" => VerifyProfile {
            run_blocklin: true,
            run_normalform: true,
            run_trajectories: true,
            expected_involutive: true,
            expected_relative_degrees: vec![1],
            expected_dims_chain: true,
            zero_dynamics_gate: Some(1e-6),
            is_spacecraft: false,
        },
        // The annihilation identity is pure block algebra and still holds;
        // the normal-form suites do not apply because the distribution is
        // not involutive.
        "nonholonomic" => VerifyProfile {
            run_blocklin: true,
            run_normalform: false,
            run_trajectories: false,
            expected_involutive: false,
            expected_relative_degrees: vec![1, 1],
            expected_dims_chain: true,
            zero_dynamics_gate: None,
            is_spacecraft: false,
        },
        "double_integrator" => VerifyProfile {
            run_blocklin: false, // M22 is singular by construction
            run_normalform: false,
            run_trajectories: false,
            expected_involutive: true,
            expected_relative_degrees: vec![2],
            expected_dims_chain: false, // r = n
            zero_dynamics_gate: None,
            is_spacecraft: false,
        },
        "asymmetric" => VerifyProfile {
            run_blocklin: false,
            run_normalform: false,
            run_trajectories: false,
            expected_involutive: true,
            expected_relative_degrees: vec![1],
            expected_dims_chain: true,
            zero_dynamics_gate: None,
            is_spacecraft: false,
        },
        other => return Err(Error::UnknownModel(other.into())),
    };
    Ok(p)
}

/// Build a registered model, optionally overridden by a JSON parameter
/// object (the `--params` file contents).
pub fn build_model(name: &str, params: Option<&Value>) -> Result<SystemModel> {
    match name {
        "spacecraft" => {
            let p = match params {
                Some(v) => spacecraft_params_from_json(v)?,
                None => SpacecraftParams::default(),
            };
            spacecraft::build(&p)
        }
        "constant" => build_constant(params),
        "spd_random" => build_spd_random(params),
        "coupled_demo" => build_coupled_demo(params),
        "nonholonomic" => build_nonholonomic(params),
        "double_integrator" => build_double_integrator(params),
        "asymmetric" => build_asymmetric(params),
        other => Err(Error::UnknownModel(other.into())),
    }
}

pub fn build_model_from_json(name: &str, params: &Value) -> Result<SystemModel> {
    build_model(name, Some(params))
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::InvalidParams(format!("{what} must be a number")))
}

fn as_usize(v: &Value, what: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| Error::InvalidParams(format!("{what} must be a nonnegative integer")))
}

fn vector_from_json(v: &Value, what: &str) -> Result<DVector<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::InvalidParams(format!("{what} must be an array")))?;
    let mut out = DVector::zeros(arr.len());
    for (i, e) in arr.iter().enumerate() {
        out[i] = as_f64(e, what)?;
    }
    Ok(out)
}

/// Parse either a nested array (full matrix) or a flat array (diagonal).
fn matrix_from_json(v: &Value, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::InvalidParams(format!("{what} must be an array")))?;
    if arr.iter().all(|e| e.is_array()) {
        if arr.len() != rows {
            return Err(Error::InvalidParams(format!(
                "{what} must have {rows} rows"
            )));
        }
        let mut out = DMatrix::zeros(rows, cols);
        for (i, row) in arr.iter().enumerate() {
            let row = row.as_array().unwrap();
            if row.len() != cols {
                return Err(Error::InvalidParams(format!(
                    "{what} row {i} must have {cols} entries"
                )));
            }
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] = as_f64(e, what)?;
            }
        }
        Ok(out)
    } else {
        if rows != cols || arr.len() != rows {
            return Err(Error::InvalidParams(format!(
                "{what} given as a diagonal must have {rows} entries"
            )));
        }
        let mut out = DMatrix::zeros(rows, rows);
        for (i, e) in arr.iter().enumerate() {
            out[(i, i)] = as_f64(e, what)?;
        }
        Ok(out)
    }
}

fn box_from_json(v: &Value, n: usize) -> Result<SampleBox> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::InvalidParams("box must be an array of [lo, hi] pairs".into()))?;
    if arr.len() != n {
        return Err(Error::InvalidParams(format!(
            "box must have {n} coordinate intervals"
        )));
    }
    let mut bounds = Vec::with_capacity(n);
    for pair in arr {
        let pair = pair
            .as_array()
            .ok_or_else(|| Error::InvalidParams("box entries must be [lo, hi]".into()))?;
        if pair.len() != 2 {
            return Err(Error::InvalidParams("box entries must be [lo, hi]".into()));
        }
        let lo = as_f64(&pair[0], "box")?;
        let hi = as_f64(&pair[1], "box")?;
        if lo > hi {
            return Err(Error::InvalidParams("box entries must satisfy lo <= hi".into()));
        }
        bounds.push((lo, hi));
    }
    Ok(SampleBox::new(bounds))
}

/// Spacecraft parameter schema: `inertia`, `coupling`, `stiffness`,
/// `damping`, `panel_area`, `wheel_momentum`, `mode_count`, plus the
/// optional `inertia_gradient` variant hook.
pub fn spacecraft_params_from_json(v: &Value) -> Result<SpacecraftParams> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidParams("params must be a JSON object".into()))?;
    let n_f = match obj.get("mode_count") {
        Some(m) => as_usize(m, "mode_count")?,
        None => 2,
    };
    if n_f == 0 {
        return Err(Error::InvalidParams("mode_count must be >= 1".into()));
    }
    let mut p = SpacecraftParams::default_with_modes(n_f);
    if let Some(val) = obj.get("inertia") {
        let m = matrix_from_json(val, 3, 3, "inertia")?;
        p.inertia = nalgebra::Matrix3::from_fn(|i, j| m[(i, j)]);
    }
    if let Some(val) = obj.get("coupling") {
        p.coupling = matrix_from_json(val, 3, n_f, "coupling")?;
    }
    if let Some(val) = obj.get("stiffness") {
        p.stiffness = matrix_from_json(val, n_f, n_f, "stiffness")?;
    }
    if let Some(val) = obj.get("damping") {
        let d = vector_from_json(val, "damping")?;
        if d.len() != n_f {
            return Err(Error::InvalidParams(format!(
                "damping must have {n_f} entries"
            )));
        }
        p.damping = d;
    }
    if let Some(val) = obj.get("panel_area") {
        p.panel_area = as_f64(val, "panel_area")?;
    }
    if let Some(val) = obj.get("wheel_momentum") {
        let w = vector_from_json(val, "wheel_momentum")?;
        if w.len() != 3 {
            return Err(Error::InvalidParams("wheel_momentum must have 3 entries".into()));
        }
        p.wheel_momentum = nalgebra::Vector3::new(w[0], w[1], w[2]);
    }
    if let Some(val) = obj.get("inertia_gradient") {
        let m = matrix_from_json(val, 3, 3, "inertia_gradient")?;
        p.inertia_gradient = Some(nalgebra::Matrix3::from_fn(|i, j| m[(i, j)]));
    }
    p.validate()?;
    Ok(p)
}

// ---------------------------------------------------------------------------
// Synthetic models
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    n: usize,
    p: usize,
    coupling: f64,
    seed: u64,
    sample_box: Option<SampleBox>,
}

fn synthetic_spec(
    params: Option<&Value>,
    kind: &str,
    default_n: usize,
    default_p: usize,
) -> Result<SyntheticSpec> {
    let mut spec = SyntheticSpec {
        n: default_n,
        p: default_p,
        coupling: 1.0,
        seed: 7,
        sample_box: None,
    };
    let Some(v) = params else { return Ok(spec) };
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidParams("params must be a JSON object".into()))?;
    if let Some(nv) = obj.get("n") {
        spec.n = as_usize(nv, "n")?;
    }
    if let Some(pv) = obj.get("p") {
        spec.p = as_usize(pv, "p")?;
    }
    if spec.p == 0 || spec.p >= spec.n {
        return Err(Error::InvalidParams("need 1 <= p < n".into()));
    }
    if let Some(mass) = obj.get("mass") {
        let mobj = mass
            .as_object()
            .ok_or_else(|| Error::InvalidParams("mass must be an object".into()))?;
        if let Some(k) = mobj.get("kind") {
            let k = k
                .as_str()
                .ok_or_else(|| Error::InvalidParams("mass.kind must be a string".into()))?;
            if k != kind {
                return Err(Error::InvalidParams(format!(
                    "mass.kind '{k}' does not match model '{kind}'"
                )));
            }
        }
        if let Some(c) = mobj.get("coupling") {
            spec.coupling = as_f64(c, "mass.coupling")?;
        }
        if let Some(s) = mobj.get("seed") {
            spec.seed = s
                .as_u64()
                .ok_or_else(|| Error::InvalidParams("mass.seed must be an integer".into()))?;
        }
    }
    if let Some(b) = obj.get("box") {
        spec.sample_box = Some(box_from_json(b, spec.n)?);
    }
    Ok(spec)
}

fn linear_force(n: usize) -> ForceFn {
    let l = DMatrix::from_fn(n, n, |i, j| {
        let base = if i == j { -0.8 } else { 0.0 };
        base + 0.1 * ((1 + i + 2 * j) as f64).sin()
    });
    Arc::new(move |x: &DVector<f64>| &l * x)
}

fn zero_jacobian(n: usize, q: usize) -> MassJacobianFn {
    Arc::new(move |_b: &DVector<f64>| vec![DMatrix::zeros(n, n); q])
}

/// Deterministic constant SPD matrix with the cross block scaled by
/// `mass.coupling` (0 gives a block-diagonal matrix and N = 0).
fn build_constant(params: Option<&Value>) -> Result<SystemModel> {
    let spec = synthetic_spec(params, "constant", 5, 2)?;
    let (n, p) = (spec.n, spec.p);
    let a = DMatrix::from_fn(n, n, |i, j| (1.0 + 3.0 * i as f64 + 7.0 * j as f64).sin());
    let mut m = &a * a.transpose() + DMatrix::identity(n, n) * (n as f64);
    for i in 0..p {
        for j in p..n {
            m[(i, j)] *= spec.coupling;
            m[(j, i)] = m[(i, j)];
        }
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::InvalidParams(
            "constant mass matrix lost positive definiteness".into(),
        ));
    }
    let mass = {
        let m = m.clone();
        Arc::new(move |_b: &DVector<f64>| m.clone())
    };
    let dims = Dimensions::new(n, p, p)?;
    let sample_box = spec
        .sample_box
        .unwrap_or_else(|| SampleBox::symmetric(n, 1.0));
    Ok(SystemModel::new(
        "constant",
        dims,
        mass,
        linear_force(n),
        DMatrix::identity(p, p),
        sample_box,
    )?
    .with_mass_jacobian(zero_jacobian(n, n - p)))
}

/// Seeded random constant SPD matrix.
fn build_spd_random(params: Option<&Value>) -> Result<SystemModel> {
    use rand::Rng;
    let spec = synthetic_spec(params, "spd_random", 6, 2)?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = crate::sampling::rng_from_seed(spec.seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose() + DMatrix::identity(n, n) * (n as f64);
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let force_mat = DMatrix::identity(n, n) * -1.0 + 0.1 * b;
    let mass = Arc::new(move |_b: &DVector<f64>| m.clone());
    let force = Arc::new(move |x: &DVector<f64>| &force_mat * x);
    let dims = Dimensions::new(n, p, p)?;
    let sample_box = spec
        .sample_box
        .unwrap_or_else(|| SampleBox::symmetric(n, 1.0));
    Ok(SystemModel::new(
        "spd_random",
        dims,
        mass,
        force,
        DMatrix::identity(p, p),
        sample_box,
    )?
    .with_mass_jacobian(zero_jacobian(n, n - p)))
}

/// One actuated velocity `v` coupled to a flexible coordinate `(q, w = q')`
/// through configuration-dependent inertia and coupling. The `q` row is a
/// kinematic identity, so the system matrix depends only on coordinates whose
/// rates carry no input: the mass-rate terms stay input-free.
fn build_coupled_demo(params: Option<&Value>) -> Result<SystemModel> {
    let spec = synthetic_spec(params, "coupled_demo", 3, 1)?;
    if spec.n != 3 || spec.p != 1 {
        return Err(Error::InvalidParams(
            "coupled_demo has fixed dimensions n = 3, p = 1".into(),
        ));
    }
    let mass = Arc::new(|b: &DVector<f64>| {
        let q = b[0];
        let m11 = 2.0 + 0.5 * q.sin();
        let c = 0.4 * q.cos();
        let m33 = 1.5 + 0.25 * (2.0 * q).sin();
        DMatrix::from_row_slice(3, 3, &[m11, 0.0, c, 0.0, 1.0, 0.0, c, 0.0, m33])
    });
    let jac = Arc::new(|b: &DVector<f64>| {
        let q = b[0];
        let dm11 = 0.5 * q.cos();
        let dc = -0.4 * q.sin();
        let dm33 = 0.5 * (2.0 * q).cos();
        vec![
            DMatrix::from_row_slice(3, 3, &[dm11, 0.0, dc, 0.0, 0.0, 0.0, dc, 0.0, dm33]),
            DMatrix::zeros(3, 3),
        ]
    });
    let force = Arc::new(|x: &DVector<f64>| {
        let (v, q, w) = (x[0], x[1], x[2]);
        DVector::from_column_slice(&[
            -0.6 * v + 0.15 * w * q.cos(),
            w,
            -1.2 * q - 0.4 * w + 0.05 * v * v,
        ])
    });
    let sample_box = spec
        .sample_box
        .unwrap_or_else(|| SampleBox::new(vec![(-0.5, 0.5), (-0.8, 0.8), (-0.8, 0.8)]));
    Ok(SystemModel::new(
        "coupled_demo",
        Dimensions::new(3, 1, 1)?,
        mass,
        force,
        DMatrix::identity(1, 1),
        sample_box,
    )?
    .with_mass_jacobian(jac))
}

/// Input distribution spanned by (1, 0, x4, 0) and (0, 1, 0, x3): the bracket
/// (0, 0, -x3, x4) escapes the span away from the origin, so the distribution
/// is not involutive on the sampling box. Realized in the system class by
/// designing the inverse matrix directly and inverting it pointwise.
fn build_nonholonomic(params: Option<&Value>) -> Result<SystemModel> {
    let spec = synthetic_spec(params, "nonholonomic", 4, 2)?;
    if spec.n != 4 || spec.p != 2 {
        return Err(Error::InvalidParams(
            "nonholonomic has fixed dimensions n = 4, p = 2".into(),
        ));
    }
    let mass = Arc::new(|b: &DVector<f64>| {
        let (b3, b4) = (b[0], b[1]);
        let c = 1.0 + b3 * b3 + b4 * b4;
        let w = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, b4, 0.0, //
                0.0, 1.0, 0.0, b3, //
                b4, 0.0, c, 0.0, //
                0.0, b3, 0.0, c,
            ],
        );
        let m = w.try_inverse().expect("designed inverse is nonsingular");
        0.5 * (&m + m.transpose())
    });
    let force = Arc::new(|x: &DVector<f64>| -x);
    let sample_box = spec.sample_box.unwrap_or_else(|| {
        SampleBox::new(vec![(-1.0, 1.0), (-1.0, 1.0), (0.3, 1.0), (0.3, 1.0)])
    });
    SystemModel::new(
        "nonholonomic",
        Dimensions::new(4, 2, 2)?,
        mass,
        force,
        DMatrix::identity(2, 2),
        sample_box,
    )
}

/// Position/velocity double integrator embedded in the class with the
/// permutation system matrix [[0, 1], [1, 0]]: y = x1 has relative degree 2.
fn build_double_integrator(params: Option<&Value>) -> Result<SystemModel> {
    let spec = synthetic_spec(params, "double_integrator", 2, 1)?;
    if spec.n != 2 || spec.p != 1 {
        return Err(Error::InvalidParams(
            "double_integrator has fixed dimensions n = 2, p = 1".into(),
        ));
    }
    let mass = Arc::new(|_b: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    let force = Arc::new(|x: &DVector<f64>| DVector::from_column_slice(&[0.0, x[1]]));
    let sample_box = spec
        .sample_box
        .unwrap_or_else(|| SampleBox::symmetric(2, 1.0));
    SystemModel::new(
        "double_integrator",
        Dimensions::new(2, 1, 1)?,
        mass,
        force,
        DMatrix::identity(1, 1),
        sample_box,
    )
}

/// Negative fixture: the system matrix is deliberately not symmetric.
fn build_asymmetric(params: Option<&Value>) -> Result<SystemModel> {
    let spec = synthetic_spec(params, "asymmetric", 3, 1)?;
    let mass = Arc::new(|_b: &DVector<f64>| {
        DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.1, 2.0, 0.0, 0.0, 0.0, 1.5])
    });
    let force = Arc::new(|x: &DVector<f64>| -x);
    let sample_box = spec
        .sample_box
        .unwrap_or_else(|| SampleBox::symmetric(3, 1.0));
    SystemModel::new(
        "asymmetric",
        Dimensions::new(3, 1, 1)?,
        mass,
        force,
        DMatrix::identity(1, 1),
        sample_box,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklin::{decompose, max_abs};

    #[test]
    fn all_names_build() {
        for name in MODEL_NAMES {
            let model = build_model(name, None).unwrap();
            assert_eq!(model.name(), name);
            verify_profile(name).unwrap();
        }
        assert!(matches!(
            build_model("nope", None),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn constant_coupling_zero_gives_block_diagonal() {
        let model = build_model_from_json(
            "constant",
            &serde_json::json!({"mass": {"kind": "constant", "coupling": 0.0}}),
        )
        .unwrap();
        let m = model.mass_at(&DVector::zeros(3)).unwrap();
        let d = decompose(&m, 2).unwrap();
        assert_eq!(d.m12().amax(), 0.0);
    }

    #[test]
    fn kind_mismatch_rejected() {
        let err = build_model_from_json(
            "constant",
            &serde_json::json!({"mass": {"kind": "spd_random"}}),
        );
        assert!(matches!(err, Err(Error::InvalidParams(_))));
    }

    #[test]
    fn spd_random_is_seed_stable() {
        let a = build_model("spd_random", None).unwrap();
        let b = build_model("spd_random", None).unwrap();
        let beta = DVector::zeros(4);
        assert_eq!(a.mass_at(&beta).unwrap(), b.mass_at(&beta).unwrap());
        let c = build_model_from_json(
            "spd_random",
            &serde_json::json!({"mass": {"kind": "spd_random", "seed": 99}}),
        )
        .unwrap();
        assert_ne!(a.mass_at(&beta).unwrap(), c.mass_at(&beta).unwrap());
    }

    #[test]
    fn nonholonomic_mass_is_symmetric_and_invertible() {
        let model = build_model("nonholonomic", None).unwrap();
        let beta = DVector::from_column_slice(&[0.5, 0.8]);
        let m = model.mass_at(&beta).unwrap();
        assert!(max_abs(&(&m - m.transpose())) < 1e-14);
        // designed first columns of M^-1
        let inv = m.try_inverse().unwrap();
        let g1: DVector<f64> = inv.column(0).into();
        let g2: DVector<f64> = inv.column(1).into();
        assert!((g1 - DVector::from_column_slice(&[1.0, 0.0, 0.8, 0.0])).amax() < 1e-10);
        assert!((g2 - DVector::from_column_slice(&[0.0, 1.0, 0.0, 0.5])).amax() < 1e-10);
    }

    #[test]
    fn double_integrator_realizes_textbook_dynamics() {
        let model = build_model("double_integrator", None).unwrap();
        let x = model
            .state(DVector::from_column_slice(&[0.3, -0.9]))
            .unwrap();
        let f = crate::model::drift(&model, &x).unwrap();
        assert!((f - DVector::from_column_slice(&[-0.9, 0.0])).amax() < 1e-14);
        let d = crate::model::dynamics(&model, &x, &DVector::from_column_slice(&[2.0])).unwrap();
        assert!((d - DVector::from_column_slice(&[-0.9, 2.0])).amax() < 1e-14);
    }

    #[test]
    fn asymmetric_fixture_fails_decompose() {
        let model = build_model("asymmetric", None).unwrap();
        let m = model.mass_at(&DVector::zeros(2)).unwrap();
        assert!(matches!(
            decompose(&m, 1),
            Err(Error::AsymmetricMatrix { .. })
        ));
    }

    #[test]
    fn spacecraft_json_round_trip() {
        let v = serde_json::json!({
            "mode_count": 1,
            "inertia": [[900.0, 0.0, 0.0], [0.0, 700.0, 0.0], [0.0, 0.0, 850.0]],
            "coupling": [[4.0], [1.0], [-2.0]],
            "stiffness": [30.0],
            "damping": [0.4],
            "panel_area": 2.5,
            "wheel_momentum": [5.0, -3.0, 2.0]
        });
        let p = spacecraft_params_from_json(&v).unwrap();
        assert_eq!(p.mode_count, 1);
        assert_eq!(p.inertia[(0, 0)], 900.0);
        assert_eq!(p.stiffness[(0, 0)], 30.0);
        assert_eq!(p.panel_area, 2.5);
        assert_eq!(p.wheel_momentum[1], -3.0);
        build_model_from_json("spacecraft", &v).unwrap();
    }

    #[test]
    fn malformed_spacecraft_params_rejected() {
        let v = serde_json::json!({"mode_count": 1, "damping": [-1.0]});
        assert!(matches!(
            build_model_from_json("spacecraft", &v),
            Err(Error::InvalidParams(_))
        ));
        let v = serde_json::json!({"panel_area": "wide"});
        assert!(build_model_from_json("spacecraft", &v).is_err());
    }
}
